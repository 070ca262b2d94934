//! Sparse featurization of a (stack top, incoming segment) pair.
//!
//! Index space `[0, D)` is split in two: a fixed block of dense indicator
//! features at the bottom, and hashed character n-grams above it. The two
//! ranges never overlap. N-grams are taken only from the head and tail of
//! each string, so long paragraphs do not drown out the indicators.

use regex::Regex;
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::catalog::NodeKind;

pub const DEFAULT_DIM: usize = 1 << 18;

const TERMINAL_PUNCT: &[char] = &['。', '！', '？', '；', '…', '.', '!', '?', ';'];
const LENGTH_BUCKETS: [usize; 3] = [10, 30, 80];
const ARABIC_DEPTH_SLOTS: usize = 6;
const NGRAM_WINDOW: usize = 10;

/// Left/right text pair with an optional node kind describing the left side.
#[derive(Debug, Clone, Copy)]
pub struct FeatureInput<'a> {
    pub context: Option<NodeKind>,
    pub left: &'a str,
    pub right: &'a str,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    /// Strictly increasing.
    pub indices: Vec<u32>,
    pub values: Vec<f64>,
}

impl SparseVector {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, f64)> + '_ {
        self.indices.iter().copied().zip(self.values.iter().copied())
    }

    pub fn get(&self, index: u32) -> f64 {
        match self.indices.binary_search(&index) {
            Ok(i) => self.values[i],
            Err(_) => 0.0,
        }
    }

    fn from_unsorted(mut raw: Vec<(u32, f64)>) -> SparseVector {
        raw.sort_unstable_by_key(|&(i, _)| i);
        let mut out = SparseVector::default();
        for (i, v) in raw {
            if out.indices.last() == Some(&i) {
                // presence features: collapse duplicates to a single 1.0
                let last = out.values.last_mut().expect("parallel vectors");
                *last = last.max(v);
            } else {
                out.indices.push(i);
                out.values.push(v);
            }
        }
        out
    }
}

/// Section-numbering patterns recognised at the start of a string.
#[derive(Debug, Clone)]
pub struct NumberingPatterns {
    arabic: Regex,
    named: Vec<(String, Regex)>,
    extra: Vec<String>,
}

impl NumberingPatterns {
    pub fn builtin() -> NumberingPatterns {
        let named = [
            ("cjk_chapter", r"^第[一二三四五六七八九十百零〇0-9]+[章篇部]"),
            ("cjk_section", r"^第[一二三四五六七八九十百零〇0-9]+[节條条款]"),
            ("cjk_enum", r"^[一二三四五六七八九十]+[、.．]"),
            ("paren_cjk", r"^[（(][一二三四五六七八九十]+[）)]"),
            ("paren_arabic", r"^[（(][0-9]{1,3}[）)]"),
            ("roman", r"^(?:[IVXLC]{1,6}|[ivxlc]{1,6})[.、)．]"),
        ];
        NumberingPatterns {
            arabic: Regex::new(r"^([0-9]{1,3}(?:[.．][0-9]{1,3})*)(?:[.．、](?:[^0-9]|$)|\s)").expect("valid regex"),
            named: named
                .iter()
                .map(|(n, p)| ((*n).to_owned(), Regex::new(p).expect("valid regex")))
                .collect(),
            extra: Vec::new(),
        }
    }

    /// Builtin patterns plus user-supplied regexes (anchored by the caller).
    pub fn with_extra(extra: &[String]) -> Result<NumberingPatterns, regex::Error> {
        let mut p = NumberingPatterns::builtin();
        for (i, src) in extra.iter().enumerate() {
            p.named.push((format!("extra_{i}"), Regex::new(src)?));
        }
        p.extra = extra.to_vec();
        Ok(p)
    }

    pub fn extra(&self) -> &[String] {
        &self.extra
    }

    /// Depth of a dotted arabic number prefix ("1." → 1, "2.3.1 " → 3).
    pub fn arabic_depth(&self, text: &str) -> Option<usize> {
        self.arabic
            .captures(text.trim_start())
            .map(|c| c[1].split(['.', '．']).count())
    }

    /// Indices into the named pattern list that match `text`.
    pub fn matching(&self, text: &str) -> impl Iterator<Item = usize> + '_ {
        let t = text.trim_start().to_owned();
        self.named
            .iter()
            .enumerate()
            .filter(move |(_, (_, re))| re.is_match(&t))
            .map(|(i, _)| i)
    }

    pub fn is_numbered(&self, text: &str) -> bool {
        self.arabic_depth(text).is_some() || self.matching(text).next().is_some()
    }

    fn slots(&self) -> usize {
        ARABIC_DEPTH_SLOTS + self.named.len() + 1
    }

    /// Number of distinct values of [`NumberingPatterns::class_of`].
    pub fn class_count(&self) -> usize {
        ARABIC_DEPTH_SLOTS + self.named.len() + 1
    }

    /// A single numbering class per string: arabic depth first, then the
    /// first matching named pattern, then "unnumbered" (the last class).
    pub fn class_of(&self, text: &str) -> usize {
        if let Some(d) = self.arabic_depth(text) {
            return d.min(ARABIC_DEPTH_SLOTS) - 1;
        }
        match self.matching(text).next() {
            Some(i) => ARABIC_DEPTH_SLOTS + i,
            None => self.class_count() - 1,
        }
    }
}

pub fn ends_with_terminal(text: &str) -> bool {
    text.trim_end().chars().last().is_some_and(|c| TERMINAL_PUNCT.contains(&c))
}

fn length_bucket(chars: usize) -> usize {
    LENGTH_BUCKETS.iter().position(|&b| chars <= b).unwrap_or(LENGTH_BUCKETS.len())
}

#[derive(Debug, Clone)]
pub struct Featurizer {
    dim: usize,
    seed: u64,
    patterns: NumberingPatterns,
    side_width: usize,
    dense: usize,
}

const CONTEXT_SLOTS: usize = 4;

impl Featurizer {
    pub fn new(dim: usize, seed: u64, patterns: NumberingPatterns) -> Featurizer {
        // numbering slots + terminal(1) + length buckets(4) + short(1)
        let side_width = patterns.slots() + 1 + LENGTH_BUCKETS.len() + 1 + 1;
        let classes = patterns.class_count();
        let dense = CONTEXT_SLOTS + 2 * side_width + 3 * CONTEXT_SLOTS + CONTEXT_SLOTS * classes * classes;
        assert!(dim > dense * 2, "feature dimension {dim} too small for {dense} indicator features");
        Featurizer { dim, seed, patterns, side_width, dense }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn patterns(&self) -> &NumberingPatterns {
        &self.patterns
    }

    /// Size of the indicator block `[0, dense_len)`.
    pub fn dense_len(&self) -> usize {
        self.dense
    }

    pub fn featurize(&self, input: &FeatureInput<'_>) -> SparseVector {
        let mut raw: Vec<(u32, f64)> = Vec::with_capacity(3 * (input.left.len() + input.right.len()) + 32);
        let ctx = match input.context {
            None => 0,
            Some(NodeKind::Root) => 1,
            Some(NodeKind::Heading) => 2,
            Some(NodeKind::Text) => 3,
        };
        raw.push((ctx as u32, 1.0));
        self.side_indicators(input.left, CONTEXT_SLOTS, &mut raw);
        self.side_indicators(input.right, CONTEXT_SLOTS + self.side_width, &mut raw);

        let cross = CONTEXT_SLOTS + 2 * self.side_width;
        let open = usize::from(!input.left.is_empty() && !ends_with_terminal(input.left));
        raw.push(((cross + 2 * ctx + open) as u32, 1.0));
        if self.patterns.is_numbered(input.right) {
            raw.push(((cross + 2 * CONTEXT_SLOTS + ctx) as u32, 1.0));
        }
        // context x left numbering class x right numbering class
        let pairs = cross + 3 * CONTEXT_SLOTS;
        let k = self.patterns.class_count();
        let (l, r) = (self.patterns.class_of(input.left), self.patterns.class_of(input.right));
        raw.push(((pairs + (ctx * k + l) * k + r) as u32, 1.0));

        self.ngrams(1, input.left, &mut raw);
        self.ngrams(2, input.right, &mut raw);
        SparseVector::from_unsorted(raw)
    }

    fn side_indicators(&self, text: &str, base: usize, out: &mut Vec<(u32, f64)>) {
        let mut at = |offset: usize| out.push(((base + offset) as u32, 1.0));
        let chars = text.chars().count();
        let mut numbered = false;
        if let Some(d) = self.patterns.arabic_depth(text) {
            at(d.min(ARABIC_DEPTH_SLOTS) - 1);
            numbered = true;
        }
        for i in self.patterns.matching(text) {
            at(ARABIC_DEPTH_SLOTS + i);
            numbered = true;
        }
        let mut o = ARABIC_DEPTH_SLOTS + self.patterns.named.len();
        if numbered {
            at(o);
        }
        o += 1;
        if ends_with_terminal(text) {
            at(o);
        }
        o += 1;
        if chars > 0 {
            at(o + length_bucket(chars));
        }
        o += LENGTH_BUCKETS.len() + 1;
        if chars > 0 && chars <= 20 {
            at(o);
        }
    }

    /// Character 1-3-grams over the first and the last `NGRAM_WINDOW`
    /// characters, each window in its own namespace.
    fn ngrams(&self, namespace: u8, text: &str, out: &mut Vec<(u32, f64)>) {
        if text.is_empty() {
            return;
        }
        let chars: Vec<char> = text.chars().collect();
        let w = NGRAM_WINDOW.min(chars.len());
        let mut head = vec!['\u{2}'];
        head.extend_from_slice(&chars[..w]);
        let mut tail = chars[chars.len() - w..].to_vec();
        tail.push('\u{3}');
        self.window_grams(2 * namespace, &head, out);
        self.window_grams(2 * namespace + 1, &tail, out);
    }

    fn window_grams(&self, namespace: u8, chars: &[char], out: &mut Vec<(u32, f64)>) {
        let span = (self.dim - self.dense) as u64;
        let mut buf = Vec::with_capacity(16);
        for n in 1..=3usize {
            for w in chars.windows(n) {
                if n == 1 && (w[0] == '\u{2}' || w[0] == '\u{3}') {
                    continue;
                }
                buf.clear();
                buf.push(namespace);
                buf.push(n as u8);
                for c in w {
                    let mut tmp = [0u8; 4];
                    buf.extend_from_slice(c.encode_utf8(&mut tmp).as_bytes());
                }
                let h = xxh3_64_with_seed(&buf, self.seed);
                out.push(((self.dense as u64 + h % span) as u32, 1.0));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fz() -> Featurizer {
        Featurizer::new(DEFAULT_DIM, 17, NumberingPatterns::builtin())
    }

    fn input<'a>(kind: NodeKind, s: &'a str, q: &'a str) -> FeatureInput<'a> {
        FeatureInput { context: Some(kind), left: s, right: q }
    }

    #[test]
    fn numbering_patterns() {
        let p = NumberingPatterns::builtin();
        assert_eq!(p.arabic_depth("1. Introduction"), Some(1));
        assert_eq!(p.arabic_depth("2.3.1 范围"), Some(3));
        assert_eq!(p.arabic_depth("2023年度报告"), None);
        assert_eq!(p.arabic_depth("3.89亿元"), None);
        assert_eq!(p.arabic_depth("3."), Some(1));
        for s in ["第一章 总则", "第三节 说明", "四、评标办法", "（二）资格", "(3) 备注", "IV. Results"] {
            assert!(p.is_numbered(s), "{s}");
        }
        for s in ["本项目已经批准。", "Introduction", "I am here"] {
            assert!(!p.is_numbered(s), "{s}");
        }
    }

    #[test]
    fn cjk_chapter_indicator_is_on() {
        let f = fz();
        let v = f.featurize(&input(NodeKind::Root, "", "第一章 总则"));
        let chapter = NumberingPatterns::builtin().named.iter().position(|(n, _)| n == "cjk_chapter").unwrap();
        let q_base = CONTEXT_SLOTS + f.side_width;
        assert_eq!(v.get((q_base + ARABIC_DEPTH_SLOTS + chapter) as u32), 1.0);
        let any_numbered = q_base + ARABIC_DEPTH_SLOTS + f.patterns.named.len();
        assert_eq!(v.get(any_numbered as u32), 1.0);
        // the root context slot
        assert_eq!(v.get(1), 1.0);
    }

    #[test]
    fn sentence_complete_indicator() {
        let f = fz();
        let terminal = CONTEXT_SLOTS + ARABIC_DEPTH_SLOTS + f.patterns.named.len() + 1;
        let v = f.featurize(&input(NodeKind::Text, "项目已完成。", "下一段"));
        assert_eq!(v.get(terminal as u32), 1.0);
        let v = f.featurize(&input(NodeKind::Text, "项目已完", "成。"));
        assert_eq!(v.get(terminal as u32), 0.0);
    }

    #[test]
    fn deterministic_and_seed_dependent() {
        let a = fz().featurize(&input(NodeKind::Heading, "1.1 范围", "本次招标范围如下"));
        let b = fz().featurize(&input(NodeKind::Heading, "1.1 范围", "本次招标范围如下"));
        assert_eq!(a, b);
        let c = Featurizer::new(DEFAULT_DIM, 18, NumberingPatterns::builtin())
            .featurize(&input(NodeKind::Heading, "1.1 范围", "本次招标范围如下"));
        assert_ne!(a, c);
    }

    #[test]
    fn indicator_and_hash_blocks_are_disjoint() {
        let f = Featurizer::new(1 << 12, 3, NumberingPatterns::builtin());
        let v = f.featurize(&input(NodeKind::Heading, "第二章 招标公告", "（一）项目名称：某某工程。"));
        let dense: Vec<_> = v.indices.iter().filter(|&&i| (i as usize) < f.dense_len()).collect();
        assert!(!dense.is_empty());
        assert!(v.indices.iter().all(|&i| (i as usize) < f.dim()));
        assert!(v.indices.windows(2).all(|w| w[0] < w[1]));
        // n-gram count only depends on characters, so the hashed block holds at least one entry
        assert!(v.indices.iter().any(|&i| i as usize >= f.dense_len()));
    }

    #[test]
    fn extra_patterns_extend_the_indicator_block() {
        let base = fz();
        let p = NumberingPatterns::with_extra(&["^§".to_owned()]).unwrap();
        let ext = Featurizer::new(DEFAULT_DIM, 17, p);
        assert!(ext.dense_len() > base.dense_len());
        assert!(ext.patterns().is_numbered("§ 4 Scope"));
        assert!(NumberingPatterns::with_extra(&["(".to_owned()]).is_err());
    }
}
