//! Corpus utilities: OCR-style chunking, a synthetic document generator,
//! train/dev/test splitting and per-source statistics.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;
use unicode_segmentation::UnicodeSegmentation;

use crate::catalog::{normalize_segment_text, CatalogNode, CatalogTree, Joiner, NodeKind, Segment};
use crate::document::Document;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("need at least 10 documents to split, got {0}")]
    TooFewDocuments(usize),
    #[error("invalid configuration: {0}")]
    BadConfig(String),
}

const HEADING_STREAM: u64 = 0;
const TEXT_STREAM: u64 = 1;

/// Independent generator for `(seed, document, stream)`.
fn substream(seed: u64, doc_index: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(doc_index.wrapping_mul(4).wrapping_add(stream));
    rng
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChunkConfig {
    pub paragraph_chunk_probability: f64,
    pub heading_piece_range: (usize, usize),
    pub text_piece_range: (usize, usize),
    pub seed: u64,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig {
            paragraph_chunk_probability: 0.5,
            heading_piece_range: (7, 20),
            text_piece_range: (70, 100),
            seed: 0,
        }
    }
}

impl ChunkConfig {
    pub fn check(&self) -> Result<(), CorpusError> {
        let p = self.paragraph_chunk_probability;
        if !(0.0..=1.0).contains(&p) {
            return Err(CorpusError::BadConfig(format!("chunk probability {p} outside [0, 1]")));
        }
        for (name, (lo, hi)) in [("heading", self.heading_piece_range), ("text", self.text_piece_range)] {
            if lo == 0 || lo > hi {
                return Err(CorpusError::BadConfig(format!("{name} piece range [{lo}, {hi}] is invalid")));
            }
        }
        Ok(())
    }
}

/// Result of chunking one document.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Chunked {
    pub segments: Vec<Segment>,
    pub gold: CatalogTree,
    /// Nodes whose Bernoulli draw selected them for chunking.
    pub selected: usize,
    pub nodes: usize,
}

/// Splits every paragraph-level node of `doc` into OCR-like segments.
///
/// `doc_index` selects the document's random substreams, so results do not
/// depend on the order in which a corpus is processed.
pub fn chunk_document(doc: &CatalogTree, cfg: &ChunkConfig, joiner: Joiner, doc_index: u64) -> Chunked {
    let mut heading_rng = substream(cfg.seed, doc_index, HEADING_STREAM);
    let mut text_rng = substream(cfg.seed, doc_index, TEXT_STREAM);
    let mut segments = Vec::new();
    let mut selected = 0;
    let mut nodes = 0;

    fn rebuild(
        node: &CatalogNode,
        cfg: &ChunkConfig,
        joiner: Joiner,
        rngs: (&mut ChaCha8Rng, &mut ChaCha8Rng),
        segments: &mut Vec<Segment>,
        selected: &mut usize,
        nodes: &mut usize,
    ) -> CatalogNode {
        let (heading_rng, text_rng) = rngs;
        let mut out = CatalogNode { kind: node.kind, content: String::new(), segments: Vec::new(), children: Vec::new() };
        if node.kind != NodeKind::Root {
            *nodes += 1;
            let (rng, range) = match node.kind {
                NodeKind::Heading => (&mut *heading_rng, cfg.heading_piece_range),
                _ => (&mut *text_rng, cfg.text_piece_range),
            };
            let content = normalize_segment_text(&node.content);
            let chunk = rng.gen_bool(cfg.paragraph_chunk_probability);
            let pieces = if chunk {
                *selected += 1;
                split_content(&content, range, rng, joiner)
            } else {
                vec![content]
            };
            for p in pieces.into_iter().filter(|p| !p.is_empty()) {
                let seg = Segment { index: segments.len(), text: p };
                joiner.append(&mut out.content, &seg.text);
                out.segments.push(seg.index);
                segments.push(seg);
            }
        }
        out.children = node
            .children
            .iter()
            .map(|c| rebuild(c, cfg, joiner, (&mut *heading_rng, &mut *text_rng), segments, selected, nodes))
            .collect();
        out
    }

    let root = rebuild(
        &doc.root,
        cfg,
        joiner,
        (&mut heading_rng, &mut text_rng),
        &mut segments,
        &mut selected,
        &mut nodes,
    );
    Chunked { segments, gold: CatalogTree { root }, selected, nodes }
}

/// Cuts `content` into pieces with target lengths drawn from `range`.
///
/// Lengths are counted in characters. A cut never falls inside a grapheme
/// cluster. With the space joiner, cuts land on a single space, which is
/// dropped; otherwise no piece starts or ends with whitespace. The last
/// piece holds whatever remains and may be shorter than the range.
pub fn split_content<R: Rng>(content: &str, range: (usize, usize), rng: &mut R, joiner: Joiner) -> Vec<String> {
    let chars: Vec<char> = content.chars().collect();
    let n = chars.len();
    let mut boundary = vec![false; n + 1];
    let mut pos = 0;
    for g in content.graphemes(true) {
        boundary[pos] = true;
        pos += g.chars().count();
    }
    boundary[n] = true;

    let (lo, hi) = range;
    let mut pieces = Vec::new();
    let mut start = 0;
    while start < n {
        let target = rng.gen_range(lo..=hi);
        if n - start <= target {
            pieces.push(chars[start..].iter().collect());
            break;
        }
        let cut = match joiner {
            Joiner::Space => space_cut(&chars, &boundary, start, target, lo, hi),
            Joiner::None => plain_cut(&chars, &boundary, start, target, lo, hi),
        };
        let Some((end, next)) = cut else {
            pieces.push(chars[start..].iter().collect());
            break;
        };
        pieces.push(chars[start..end].iter().collect());
        start = next;
    }
    pieces
}

/// Candidate cut positions ordered by distance from the target, inside the
/// allowed length range first.
fn candidates(start: usize, target: usize, lo: usize, hi: usize, n: usize) -> impl Iterator<Item = usize> {
    let t = start + target;
    let min = start + lo;
    let max = (start + hi).min(n - 1);
    (0..=hi.max(target))
        .flat_map(move |d| [t.checked_sub(d), Some(t + d)].into_iter().flatten())
        .filter(move |&c| c > start && c >= min && c <= max)
}

fn plain_cut(chars: &[char], boundary: &[bool], start: usize, target: usize, lo: usize, hi: usize) -> Option<(usize, usize)> {
    let ok = |c: usize| boundary[c] && !chars[c - 1].is_whitespace() && !chars[c].is_whitespace();
    candidates(start, target, lo, hi, chars.len())
        .find(|&c| ok(c))
        .or_else(|| (start + 1..chars.len()).find(|&c| ok(c)))
        .map(|c| (c, c))
}

fn space_cut(chars: &[char], boundary: &[bool], start: usize, target: usize, lo: usize, hi: usize) -> Option<(usize, usize)> {
    let ok = |c: usize| {
        chars[c] == ' '
            && boundary[c]
            && c + 1 < chars.len()
            && !chars[c - 1].is_whitespace()
            && !chars[c + 1].is_whitespace()
    };
    let t = start + target;
    // nearest preceding space within three characters of the target
    let near = (t.saturating_sub(3)..=t).rev().find(|&c| c > start && c - start >= lo && c < chars.len() && ok(c));
    near.or_else(|| candidates(start, target, lo, hi, chars.len()).find(|&c| ok(c)))
        .or_else(|| (start + 1..chars.len()).find(|&c| ok(c)))
        .map(|c| (c, c + 1))
}

/// Chunks every document with per-document substreams; output order and
/// contents are independent of thread scheduling.
pub fn chunk_corpus(docs: &[Document], cfg: &ChunkConfig, joiner: Joiner) -> Vec<(Document, Chunked)> {
    docs.par_iter()
        .enumerate()
        .map(|(i, d)| {
            let c = chunk_document(&d.tree, cfg, joiner, i as u64);
            let mut doc = Document::new(d.id.clone(), d.source.clone(), c.gold.clone());
            doc.segments = Some(c.segments.iter().map(|s| s.text.clone()).collect());
            (doc, c)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum HeadingStyle {
    /// "1.", "1.1", "1.1.1", ...
    Arabic,
    /// A run of the ladder 第X章 > 第X节 > X、 > （X） > （N）.
    Ladder,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenConfig {
    pub docs: usize,
    /// Tree depth without the root: the deepest level any node may sit at.
    pub depth_range: (usize, usize),
    pub top_level_range: (usize, usize),
    pub subheading_range: (usize, usize),
    pub text_range: (usize, usize),
    pub leaf_heading_probability: f64,
    /// Chance that the document uses arabic numbering instead of the ladder.
    pub arabic_probability: f64,
    /// Chance that the document opens with an unnumbered heading such as
    /// 前言, holding only texts.
    pub plain_heading_probability: f64,
    pub sentences_range: (usize, usize),
    pub max_nodes: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            docs: 200,
            depth_range: (2, 5),
            top_level_range: (2, 5),
            subheading_range: (1, 3),
            text_range: (1, 3),
            leaf_heading_probability: 0.2,
            arabic_probability: 0.5,
            plain_heading_probability: 0.1,
            sentences_range: (1, 4),
            max_nodes: 300,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn check(&self) -> Result<(), CorpusError> {
        let bad = |m: String| Err(CorpusError::BadConfig(m));
        let (dlo, dhi) = self.depth_range;
        if dlo < 2 || dlo > dhi || dhi > LADDER.len() + 1 {
            return bad(format!("depth range [{dlo}, {dhi}] must satisfy 2 <= min <= max <= {}", LADDER.len() + 1));
        }
        for (name, (lo, hi)) in [
            ("top level", self.top_level_range),
            ("subheading", self.subheading_range),
            ("text", self.text_range),
            ("sentences", self.sentences_range),
        ] {
            if lo == 0 || lo > hi {
                return bad(format!("{name} range [{lo}, {hi}] is invalid"));
            }
        }
        for p in [self.leaf_heading_probability, self.arabic_probability, self.plain_heading_probability] {
            if !(0.0..=1.0).contains(&p) {
                return bad(format!("probability {p} outside [0, 1]"));
            }
        }
        if self.max_nodes < 2 {
            return bad("max nodes must be at least 2".into());
        }
        Ok(())
    }
}

const CN_DIGITS: [&str; 10] = ["零", "一", "二", "三", "四", "五", "六", "七", "八", "九"];

fn chinese_numeral(n: usize) -> String {
    match n {
        0..=9 => CN_DIGITS[n].to_owned(),
        10 => "十".to_owned(),
        11..=19 => format!("十{}", CN_DIGITS[n - 10]),
        _ => {
            let tail = if n % 10 == 0 { String::new() } else { CN_DIGITS[n % 10].to_owned() };
            format!("{}十{tail}", CN_DIGITS[(n / 10) % 10])
        }
    }
}

type LadderRung = fn(usize) -> String;

const LADDER: [LadderRung; 5] = [
    |n| format!("第{}章 ", chinese_numeral(n)),
    |n| format!("第{}节 ", chinese_numeral(n)),
    |n| format!("{}、", chinese_numeral(n)),
    |n| format!("（{}）", chinese_numeral(n)),
    |n| format!("（{n}）"),
];

const TITLE_WORDS: &[&str] = &[
    "项目", "招标", "公告", "范围", "资格", "要求", "评标", "办法", "合同", "条款", "信用", "评级", "报告", "债务",
    "情况", "安全", "分析", "财务", "指标", "经营", "风险", "管理", "政府", "收入", "支出", "预算", "担保", "说明",
    "投标", "文件", "技术", "规格", "服务", "期限", "地点", "联系", "方式", "资金", "来源", "结论", "概况", "基本",
];

const PLAIN_TITLES: &[&str] = &["前言", "附录", "声明", "总结", "附件目录", "重要提示", "释义", "备查文件"];

const BODY_WORDS: &[&str] = &[
    "本次", "项目", "采购", "单位", "应当", "按照", "规定", "提交", "相关", "材料", "公司", "年度", "实现", "营业",
    "收入", "同比", "增长", "债务", "余额", "亿元", "地区", "经济", "发展", "稳定", "投标人", "须", "具备", "能力",
    "合同", "履行", "期间", "资金", "主要", "来源", "财政", "预算", "安排", "评级", "结果", "显示", "整体", "风险",
    "可控", "政府", "负债", "水平", "较低", "偿债", "保障", "上述", "情况", "进行", "说明", "审核", "通过",
];

const FILLERS: &[&str] = &["的", "和", "在", "为", "及", "对", "由"];

fn title(rng: &mut ChaCha8Rng) -> String {
    let k = rng.gen_range(2..=4);
    (0..k).map(|_| *TITLE_WORDS.choose(rng).expect("non-empty")).collect()
}

fn body_text(rng: &mut ChaCha8Rng, sentences: (usize, usize)) -> String {
    let mut out = String::new();
    if rng.gen_bool(0.1) {
        out.push_str(&format!("{}年", rng.gen_range(2015..=2023)));
    }
    for _ in 0..rng.gen_range(sentences.0..=sentences.1) {
        let words = rng.gen_range(5..=14);
        for w in 0..words {
            if w > 0 && rng.gen_bool(0.25) {
                out.push_str(FILLERS.choose(rng).expect("non-empty"));
            }
            if rng.gen_bool(0.06) {
                out.push_str(&format!("{}.{}", rng.gen_range(1..=999), rng.gen_range(0..=99)));
            }
            out.push_str(BODY_WORDS.choose(rng).expect("non-empty"));
        }
        out.push(if rng.gen_bool(0.9) { '。' } else { '；' });
    }
    if out.ends_with('；') {
        out.pop();
        out.push('。');
    }
    out
}

struct Builder<'c> {
    cfg: &'c GenConfig,
    rng: ChaCha8Rng,
    style: HeadingStyle,
    ladder_offset: usize,
    depth: usize,
    counters: Vec<usize>,
    nodes: usize,
}

impl Builder<'_> {
    fn heading_text(&mut self, level: usize) -> String {
        self.counters.truncate(level);
        while self.counters.len() < level {
            self.counters.push(0);
        }
        self.counters[level - 1] += 1;
        let prefix = match self.style {
            HeadingStyle::Arabic => {
                let nums: Vec<String> = self.counters.iter().map(|c| c.max(&1).to_string()).collect();
                if level == 1 {
                    format!("{}. ", nums[0])
                } else {
                    format!("{} ", nums.join("."))
                }
            }
            HeadingStyle::Ladder => LADDER[self.ladder_offset + level - 1](self.counters[level - 1]),
        };
        format!("{prefix}{}", title(&mut self.rng))
    }

    fn room(&self) -> bool {
        self.nodes < self.cfg.max_nodes
    }

    fn texts(&mut self, n: usize, into: &mut CatalogNode) {
        for _ in 0..n {
            if !self.room() {
                break;
            }
            self.nodes += 1;
            let body = body_text(&mut self.rng, self.cfg.sentences_range);
            into.children.push(CatalogNode::text(body, Vec::new()));
        }
    }

    fn plain_heading(&mut self) -> CatalogNode {
        self.nodes += 1;
        let title = PLAIN_TITLES.choose(&mut self.rng).expect("non-empty").to_string();
        let mut node = CatalogNode::heading(title, Vec::new());
        if !self.rng.gen_bool(self.cfg.leaf_heading_probability) {
            let n = self.rng.gen_range(self.cfg.text_range.0..=self.cfg.text_range.1);
            self.texts(n, &mut node);
        }
        node
    }

    fn heading(&mut self, level: usize) -> CatalogNode {
        self.nodes += 1;
        let text = self.heading_text(level);
        let mut node = CatalogNode::heading(text, Vec::new());
        if self.rng.gen_bool(self.cfg.leaf_heading_probability) {
            return node;
        }
        let deepest = level + 1 == self.depth;
        let (tlo, thi) = self.cfg.text_range;
        let texts = if deepest { self.rng.gen_range(tlo..=thi) } else { self.rng.gen_range(0..=thi) };
        self.texts(texts, &mut node);
        if !deepest {
            let (lo, hi) = self.cfg.subheading_range;
            for _ in 0..self.rng.gen_range(lo..=hi) {
                if !self.room() {
                    break;
                }
                let child = self.heading(level + 1);
                node.children.push(child);
            }
        }
        node
    }
}

fn assign_segments(node: &mut CatalogNode, next: &mut usize) {
    if node.kind != NodeKind::Root {
        node.segments = vec![*next];
        *next += 1;
    }
    for c in &mut node.children {
        assign_segments(c, next);
    }
}

/// Generates one synthetic document; every node holds exactly one segment.
pub fn generate_document(cfg: &GenConfig, doc_index: u64) -> Document {
    let mut rng = substream(cfg.seed, doc_index, 2);
    let depth = rng.gen_range(cfg.depth_range.0..=cfg.depth_range.1);
    let style = if rng.gen_bool(cfg.arabic_probability) { HeadingStyle::Arabic } else { HeadingStyle::Ladder };
    let heading_levels = depth - 1;
    let ladder_offset = rng.gen_range(0..=LADDER.len() - heading_levels);
    let mut b = Builder { cfg, rng, style, ladder_offset, depth, counters: Vec::new(), nodes: 0 };
    let (lo, hi) = cfg.top_level_range;
    let mut children = Vec::new();
    if b.rng.gen_bool(cfg.plain_heading_probability) {
        children.push(b.plain_heading());
    }
    for _ in 0..b.rng.gen_range(lo..=hi) {
        if !b.room() {
            break;
        }
        children.push(b.heading(1));
    }
    let mut tree = CatalogTree::from_children(children);
    assign_segments(&mut tree.root, &mut 0);
    let source = match style {
        HeadingStyle::Arabic => "synthetic-arabic",
        HeadingStyle::Ladder => "synthetic-ladder",
    };
    Document::new(format!("syn-{}-{doc_index:05}", cfg.seed), source, tree)
}

pub fn generate_synthetic(cfg: &GenConfig) -> Result<Vec<Document>, CorpusError> {
    cfg.check()?;
    Ok((0..cfg.docs as u64).into_par_iter().map(|i| generate_document(cfg, i)).collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split<T> {
    pub train: Vec<T>,
    pub dev: Vec<T>,
    pub test: Vec<T>,
}

/// Seeded 8:1:1 split.
pub fn split<T: Clone>(corpus: &[T], seed: u64) -> Result<Split<T>, CorpusError> {
    let n = corpus.len();
    if n < 10 {
        return Err(CorpusError::TooFewDocuments(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_train = (n as f64 * 0.8).round() as usize;
    let n_dev = (n as f64 * 0.1).round() as usize;
    let pick = |idx: &[usize]| idx.iter().map(|&i| corpus[i].clone()).collect::<Vec<T>>();
    Ok(Split {
        train: pick(&order[..n_train]),
        dev: pick(&order[n_train..n_train + n_dev]),
        test: pick(&order[n_train + n_dev..]),
    })
}

/// Seeded sample of `n` documents, kept in their original order.
pub fn subsample<T: Clone>(corpus: &[T], n: usize, seed: u64) -> Vec<T> {
    if n >= corpus.len() {
        return corpus.to_vec();
    }
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut keep = order[..n].to_vec();
    keep.sort_unstable();
    keep.into_iter().map(|i| corpus[i].clone()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct SourceStats {
    pub docs: usize,
    pub avg_length: f64,
    pub avg_headings: f64,
    pub avg_texts: f64,
    pub avg_nodes: f64,
    /// Counts the root as a level, so `Root[H[T]]` has depth 3.
    pub avg_depth: f64,
}

#[derive(Default)]
struct Sums {
    docs: usize,
    length: usize,
    headings: usize,
    texts: usize,
    depth: usize,
}

impl Sums {
    fn add(&mut self, tree: &CatalogTree) {
        self.docs += 1;
        let flat = tree.flatten();
        self.length += flat.iter().map(|t| t.content.chars().count()).sum::<usize>();
        self.headings += flat.iter().filter(|t| t.kind == NodeKind::Heading).count();
        self.texts += flat.iter().filter(|t| t.kind == NodeKind::Text).count();
        self.depth += flat.iter().map(|t| t.level).max().unwrap_or(0) + 1;
    }

    fn finish(&self) -> SourceStats {
        if self.docs == 0 {
            return SourceStats::default();
        }
        let d = self.docs as f64;
        SourceStats {
            docs: self.docs,
            avg_length: self.length as f64 / d,
            avg_headings: self.headings as f64 / d,
            avg_texts: self.texts as f64 / d,
            avg_nodes: (self.headings + self.texts) as f64 / d,
            avg_depth: self.depth as f64 / d,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct CorpusStats {
    pub by_source: BTreeMap<String, SourceStats>,
    pub total: SourceStats,
}

pub fn stats(corpus: &[Document]) -> CorpusStats {
    let mut per: BTreeMap<String, Sums> = BTreeMap::new();
    let mut all = Sums::default();
    for d in corpus {
        per.entry(d.source.clone()).or_default().add(&d.tree);
        all.add(&d.tree);
    }
    CorpusStats {
        by_source: per.into_iter().map(|(k, v)| (k, v.finish())).collect(),
        total: all.finish(),
    }
}

impl CorpusStats {
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<20} {:>6} {:>10} {:>9} {:>9} {:>9} {:>9}\n",
            "source", "docs", "avg.len", "heading", "text", "total", "depth"
        );
        let rows = self.by_source.iter().map(|(k, v)| (k.as_str(), v)).chain([("total", &self.total)]);
        for (name, s) in rows {
            out.push_str(&format!(
                "{:<20} {:>6} {:>10.2} {:>9.2} {:>9.2} {:>9.2} {:>9.2}\n",
                name, s.docs, s.avg_length, s.avg_headings, s.avg_texts, s.avg_nodes, s.avg_depth
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::transition::oracle_actions;
    use crate::catalog::Action;

    fn para_tree(n: usize) -> CatalogTree {
        CatalogTree::from_children(
            (0..n)
                .map(|i| {
                    CatalogNode::heading(format!("第{}章 招标公告内容说明", chinese_numeral(i + 1)), vec![])
                        .with_children(vec![CatalogNode::text("本次项目采购单位应当按照规定提交相关材料。".repeat(4), vec![])])
                })
                .collect(),
        )
    }

    #[test]
    fn chinese_numerals() {
        assert_eq!(chinese_numeral(3), "三");
        assert_eq!(chinese_numeral(10), "十");
        assert_eq!(chinese_numeral(14), "十四");
        assert_eq!(chinese_numeral(20), "二十");
        assert_eq!(chinese_numeral(35), "三十五");
    }

    #[test]
    fn zero_probability_means_one_segment_per_node() {
        let cfg = ChunkConfig { paragraph_chunk_probability: 0.0, ..ChunkConfig::default() };
        let c = chunk_document(&para_tree(5), &cfg, Joiner::None, 0);
        assert_eq!(c.segments.len(), 10);
        assert_eq!(c.selected, 0);
        let steps = oracle_actions(&c.gold).unwrap();
        assert!(steps.iter().all(|s| s.action != Action::Concat));
    }

    #[test]
    fn fourteen_char_heading_pieces_stay_in_range() {
        let heading = "招标公告项目采购资格要求说明";
        assert_eq!(heading.chars().count(), 14);
        let tree = CatalogTree::from_children(vec![CatalogNode::heading(heading, vec![])]);
        let cfg = ChunkConfig { paragraph_chunk_probability: 1.0, seed: 9, ..ChunkConfig::default() };
        for doc in 0..50 {
            let c = chunk_document(&tree, &cfg, Joiner::None, doc);
            let lens: Vec<usize> = c.segments.iter().map(|s| s.text.chars().count()).collect();
            assert_eq!(lens.iter().sum::<usize>(), 14);
            for l in &lens[..lens.len() - 1] {
                assert!((7..=20).contains(l), "{lens:?}");
            }
            assert_eq!(c.gold.root.children[0].content, heading);
        }
    }

    #[test]
    fn plain_cuts_avoid_whitespace_edges_and_split_graphemes() {
        let text = "e\u{301}".repeat(40);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pieces = split_content(&text, (7, 9), &mut rng, Joiner::None);
        assert_eq!(pieces.concat(), text);
        for p in &pieces {
            assert!(p.starts_with('e'), "piece starts with a combining mark: {p:?}");
        }
        let spaced = "1.1 招标 范围 说明 资格 要求 评标 办法 合同 条款";
        let pieces = split_content(spaced, (3, 5), &mut rng, Joiner::None);
        assert_eq!(pieces.concat(), spaced);
        assert!(pieces.iter().all(|p| p.trim() == p));
    }

    #[test]
    fn space_joiner_cuts_on_spaces() {
        let text = "the credit rating report covers the debt situation and the security analysis of the region in detail";
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pieces = split_content(text, (12, 20), &mut rng, Joiner::Space);
        assert!(pieces.len() > 3);
        assert_eq!(pieces.join(" "), text);
        let words: Vec<&str> = text.split(' ').collect();
        for p in &pieces {
            assert!(p.split(' ').all(|w| words.contains(&w)), "{p:?}");
        }
    }

    #[test]
    fn heading_and_text_streams_are_independent() {
        let tree = para_tree(6);
        let base = ChunkConfig { paragraph_chunk_probability: 1.0, seed: 3, ..ChunkConfig::default() };
        let other = ChunkConfig { heading_piece_range: (8, 9), ..base.clone() };
        let texts = |c: &Chunked| -> Vec<String> {
            c.gold.flatten().into_iter().filter(|t| t.kind == NodeKind::Text).map(|t| t.content).collect()
        };
        let a = chunk_document(&tree, &base, Joiner::None, 0);
        let b = chunk_document(&tree, &other, Joiner::None, 0);
        let text_pieces = |c: &Chunked| -> Vec<usize> {
            c.gold.root.children.iter().map(|h| h.children[0].segments.len()).collect()
        };
        assert_eq!(texts(&a), texts(&b));
        assert_eq!(text_pieces(&a), text_pieces(&b));
    }

    #[test]
    fn generator_is_deterministic_and_valid() {
        let cfg = GenConfig { docs: 30, seed: 5, ..GenConfig::default() };
        let a = generate_synthetic(&cfg).unwrap();
        let b = generate_synthetic(&cfg).unwrap();
        assert_eq!(a, b);
        for d in &a {
            d.tree.validate().unwrap();
            assert!(d.tree.node_count() <= cfg.max_nodes + 1);
            d.tree.validate_against(&d.segment_list().unwrap(), Joiner::None).unwrap();
        }
    }

    #[test]
    fn shallow_config_stays_shallow() {
        let cfg = GenConfig { docs: 20, depth_range: (2, 2), seed: 1, ..GenConfig::default() };
        for d in generate_synthetic(&cfg).unwrap() {
            assert!(d.tree.flatten().iter().all(|t| (1..=2).contains(&t.level)));
        }
    }

    #[test]
    fn generated_text_is_recognisable() {
        let cfg = GenConfig { docs: 40, seed: 2, ..GenConfig::default() };
        let mut headings = 0;
        let mut leaves = 0;
        for d in generate_synthetic(&cfg).unwrap() {
            d.tree.root.walk(0, &mut |n, _| match n.kind {
                NodeKind::Text => assert!(n.content.ends_with('。'), "{}", n.content),
                NodeKind::Heading => {
                    headings += 1;
                    if n.children.is_empty() {
                        leaves += 1;
                    }
                    assert!(!crate::scorer::features::ends_with_terminal(&n.content));
                }
                NodeKind::Root => {}
            });
        }
        let frac = leaves as f64 / headings as f64;
        assert!((0.15..=0.40).contains(&frac), "leaf heading fraction {frac}");
    }

    #[test]
    fn bad_configs_rejected() {
        assert!(GenConfig { depth_range: (1, 3), ..GenConfig::default() }.check().is_err());
        assert!(ChunkConfig { heading_piece_range: (0, 3), ..ChunkConfig::default() }.check().is_err());
        assert!(ChunkConfig { paragraph_chunk_probability: 1.5, ..ChunkConfig::default() }.check().is_err());
    }

    #[test]
    fn split_sizes() {
        let docs: Vec<usize> = (0..650).collect();
        let s = split(&docs, 1).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (520, 65, 65));
        let mut all: Vec<usize> = s.train.iter().chain(&s.dev).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, docs);
        assert_eq!(split(&docs, 1).unwrap(), s);
        let ten: Vec<usize> = (0..10).collect();
        let s = split(&ten, 0).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (8, 1, 1));
        assert_eq!(split(&docs[..9], 0).unwrap_err(), CorpusError::TooFewDocuments(9));
    }

    #[test]
    fn subsample_keeps_order() {
        let docs: Vec<usize> = (0..100).collect();
        let s = subsample(&docs, 40, 3);
        assert_eq!(s.len(), 40);
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(subsample(&docs, 40, 3), s);
        assert_eq!(subsample(&docs, 500, 3).len(), 100);
    }

    #[test]
    fn stats_conventions() {
        let doc = Document::new(
            "a",
            "x",
            CatalogTree::from_children(vec![CatalogNode::heading("H", vec![0]).with_children(vec![CatalogNode::text("T", vec![1])])]),
        );
        let s = stats(std::slice::from_ref(&doc));
        assert_eq!(s.total.avg_depth, 3.0);
        assert_eq!(s.total.avg_nodes, 2.0);
        assert_eq!(s.total.avg_length, 2.0);
        assert_eq!(stats(&[]).total, SourceStats::default());
        assert!(s.table().contains("total"));
    }
}
