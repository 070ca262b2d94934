//! Two baseline formulations over the shared linear scorer.
//!
//! * Pipeline: a binary classifier decides whether each segment continues
//!   the previous one, then every merged unit gets a level label.
//! * Tagging: every segment gets a BIO tag over the level labels in one pass.
//!
//! Both rebuild a tree from the resulting `(label, content)` units with a
//! heading stack.

use rayon::prelude::*;
use serde::Serialize;

use crate::catalog::{CatalogNode, CatalogTree, Joiner, NodeKind, Segment};
use crate::scorer::features::{FeatureInput, Featurizer};
use crate::scorer::linear::{self, Example, HeadKind, LinearModel, TrainConfig, TrainError};

pub const DEFAULT_MAX_DEPTH: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum LevelLabel {
    /// Heading at the given level, `1..=max_depth`.
    Heading(usize),
    Text,
}

impl LevelLabel {
    pub fn classes(max_depth: usize) -> usize {
        max_depth + 1
    }

    pub fn index(self, max_depth: usize) -> usize {
        match self {
            LevelLabel::Heading(k) => k.clamp(1, max_depth) - 1,
            LevelLabel::Text => max_depth,
        }
    }

    pub fn from_index(i: usize, max_depth: usize) -> LevelLabel {
        if i >= max_depth {
            LevelLabel::Text
        } else {
            LevelLabel::Heading(i + 1)
        }
    }

    pub fn name(self) -> String {
        match self {
            LevelLabel::Heading(k) => format!("H{k}"),
            LevelLabel::Text => "Text".into(),
        }
    }
}

/// B/I tag over a level label. The O tag is never produced: every segment
/// belongs to some node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct BioTag {
    pub begin: bool,
    pub label: LevelLabel,
}

impl BioTag {
    pub fn b(label: LevelLabel) -> BioTag {
        BioTag { begin: true, label }
    }

    pub fn i(label: LevelLabel) -> BioTag {
        BioTag { begin: false, label }
    }

    pub fn classes(max_depth: usize) -> usize {
        2 * LevelLabel::classes(max_depth)
    }

    pub fn index(self, max_depth: usize) -> usize {
        2 * self.label.index(max_depth) + usize::from(!self.begin)
    }

    pub fn from_index(i: usize, max_depth: usize) -> BioTag {
        BioTag { begin: i % 2 == 0, label: LevelLabel::from_index(i / 2, max_depth) }
    }

    /// An `I` tag is only legal after a tag with the same label.
    pub fn repair(self, prev: Option<BioTag>) -> BioTag {
        match prev {
            Some(p) if !self.begin && p.label == self.label => self,
            _ => BioTag::b(self.label),
        }
    }
}

/// A labelled run of consecutive segments.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Unit {
    pub label: LevelLabel,
    pub content: String,
    pub segments: Vec<usize>,
}

/// Rebuilds a tree with a heading stack: `H_k` pops until the top has a
/// level below `k` (the root counts as 0) and is pushed; text attaches to the
/// current top. Skipped levels are allowed.
pub fn rebuild_from_levels(units: &[Unit]) -> CatalogTree {
    // (level, path of child indices from the root)
    let mut stack: Vec<(usize, Vec<usize>)> = vec![(0, Vec::new())];
    let mut tree = CatalogTree::new();
    fn node_mut<'a>(root: &'a mut CatalogNode, path: &[usize]) -> &'a mut CatalogNode {
        path.iter().fold(root, |n, &i| &mut n.children[i])
    }
    for u in units {
        match u.label {
            LevelLabel::Heading(k) => {
                while stack.last().is_some_and(|(l, _)| *l >= k) {
                    stack.pop();
                }
                let (_, path) = stack.last().expect("root stays on the stack").clone();
                let parent = node_mut(&mut tree.root, &path);
                parent.children.push(CatalogNode::heading(u.content.clone(), u.segments.clone()));
                let mut child = path;
                child.push(parent.children.len() - 1);
                stack.push((k, child));
            }
            LevelLabel::Text => {
                let (_, path) = stack.last().expect("root stays on the stack");
                node_mut(&mut tree.root, path)
                    .children
                    .push(CatalogNode::text(u.content.clone(), u.segments.clone()));
            }
        }
    }
    tree
}

/// Convenience form of [`rebuild_from_levels`] for `(label, content)` pairs,
/// numbering one segment per unit.
pub fn rebuild_from_pairs(pairs: &[(LevelLabel, &str)]) -> CatalogTree {
    let units: Vec<Unit> = pairs
        .iter()
        .enumerate()
        .map(|(i, (label, c))| Unit { label: *label, content: (*c).to_owned(), segments: vec![i] })
        .collect();
    rebuild_from_levels(&units)
}

/// Gold units of a tree in pre-order. Headings deeper than `max_depth` are
/// clamped to it, so such trees cannot be reproduced.
pub fn gold_units(gold: &CatalogTree, max_depth: usize) -> Vec<Unit> {
    let mut units = Vec::new();
    for child in &gold.root.children {
        child.walk(1, &mut |n, level| {
            let label = match n.kind {
                NodeKind::Heading => LevelLabel::Heading(level.min(max_depth)),
                _ => LevelLabel::Text,
            };
            units.push(Unit { label, content: n.content.clone(), segments: n.segments.clone() });
        });
    }
    units
}

pub trait ConcatClassifier {
    /// Whether `next` continues the unit that `prev` belongs to.
    fn merge(&self, prev: &Segment, next: &Segment) -> bool;
}

pub trait LevelClassifier {
    fn level(&self, unit_content: &str, segments: &[usize]) -> LevelLabel;
}

pub trait Tagger {
    fn tag(&self, prev: Option<&Segment>, segment: &Segment) -> BioTag;
}

pub fn pipeline_predict(
    segments: &[Segment],
    joiner: Joiner,
    concat: &dyn ConcatClassifier,
    level: &dyn LevelClassifier,
) -> CatalogTree {
    let mut spans: Vec<Vec<&Segment>> = Vec::new();
    for (i, seg) in segments.iter().enumerate() {
        match spans.last_mut() {
            Some(span) if concat.merge(&segments[i - 1], seg) => span.push(seg),
            _ => spans.push(vec![seg]),
        }
    }
    let units: Vec<Unit> = spans
        .into_iter()
        .map(|span| {
            let content = joiner.join_all(span.iter().map(|s| s.text.as_str()));
            let idx: Vec<usize> = span.iter().map(|s| s.index).collect();
            Unit { label: level.level(&content, &idx), content, segments: idx }
        })
        .collect();
    rebuild_from_levels(&units)
}

/// Greedy tagging with legality repair, then span merging and rebuild.
pub fn tagging_predict(segments: &[Segment], joiner: Joiner, tagger: &dyn Tagger) -> CatalogTree {
    let mut units: Vec<Unit> = Vec::new();
    let mut prev: Option<BioTag> = None;
    for (i, seg) in segments.iter().enumerate() {
        let tag = tagger.tag(i.checked_sub(1).map(|j| &segments[j]), seg).repair(prev);
        match units.last_mut() {
            Some(u) if !tag.begin => {
                joiner.append(&mut u.content, &seg.text);
                u.segments.push(seg.index);
            }
            _ => units.push(Unit { label: tag.label, content: seg.text.clone(), segments: vec![seg.index] }),
        }
        prev = Some(tag);
    }
    rebuild_from_levels(&units)
}

/// Classifiers that read answers off a gold tree, for upper-bound checks.
pub struct GoldBaseline {
    max_depth: usize,
    /// Owning unit of every segment index.
    owner: Vec<usize>,
    units: Vec<Unit>,
}

impl GoldBaseline {
    pub fn new(gold: &CatalogTree, max_depth: usize) -> GoldBaseline {
        let units = gold_units(gold, max_depth);
        let n = units.iter().flat_map(|u| u.segments.iter()).max().map_or(0, |m| m + 1);
        let mut owner = vec![usize::MAX; n];
        for (u, unit) in units.iter().enumerate() {
            for &s in &unit.segments {
                owner[s] = u;
            }
        }
        GoldBaseline { max_depth, owner, units }
    }

    pub fn max_depth(&self) -> usize {
        self.max_depth
    }

    fn unit_of(&self, segment: usize) -> Option<&Unit> {
        self.owner.get(segment).and_then(|&u| self.units.get(u))
    }
}

impl ConcatClassifier for GoldBaseline {
    fn merge(&self, prev: &Segment, next: &Segment) -> bool {
        let o = |s: &Segment| self.owner.get(s.index).copied();
        o(prev).is_some() && o(prev) == o(next)
    }
}

impl LevelClassifier for GoldBaseline {
    fn level(&self, _: &str, segments: &[usize]) -> LevelLabel {
        segments.first().and_then(|&s| self.unit_of(s)).map_or(LevelLabel::Text, |u| u.label)
    }
}

impl Tagger for GoldBaseline {
    fn tag(&self, _: Option<&Segment>, segment: &Segment) -> BioTag {
        match self.unit_of(segment.index) {
            Some(u) => BioTag { begin: u.segments.first() == Some(&segment.index), label: u.label },
            None => BioTag::b(LevelLabel::Text),
        }
    }
}

fn pair_input<'a>(prev: &'a str, next: &'a str) -> FeatureInput<'a> {
    FeatureInput { context: None, left: prev, right: next }
}

/// Linear concat head: class 1 means "merge with previous".
pub struct LinearConcat<'m>(pub &'m LinearModel);

impl ConcatClassifier for LinearConcat<'_> {
    fn merge(&self, prev: &Segment, next: &Segment) -> bool {
        self.0.predict_input(&pair_input(&prev.text, &next.text)) == 1
    }
}

pub struct LinearLevel<'m> {
    pub model: &'m LinearModel,
    pub max_depth: usize,
}

impl LevelClassifier for LinearLevel<'_> {
    fn level(&self, unit_content: &str, _: &[usize]) -> LevelLabel {
        LevelLabel::from_index(self.model.predict_input(&pair_input("", unit_content)), self.max_depth)
    }
}

pub struct LinearTagger<'m> {
    pub model: &'m LinearModel,
    pub max_depth: usize,
}

impl Tagger for LinearTagger<'_> {
    fn tag(&self, prev: Option<&Segment>, segment: &Segment) -> BioTag {
        let left = prev.map_or("", |p| p.text.as_str());
        BioTag::from_index(self.model.predict_input(&pair_input(left, &segment.text)), self.max_depth)
    }
}

/// Max depth recovered from a level head's class count.
pub fn max_depth_of(model: &LinearModel) -> usize {
    match model.head() {
        HeadKind::Tag => model.classes() / 2 - 1,
        _ => model.classes() - 1,
    }
}

/// A gold document as seen by the baselines: its segments and tree.
pub struct TrainingDoc<'a> {
    pub segments: &'a [Segment],
    pub gold: &'a CatalogTree,
}

fn fit(model: LinearModel, data: Vec<Example>, config: &TrainConfig) -> Result<LinearModel, TrainError> {
    if data.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    linear::train(model, &data, config)
}

pub fn concat_examples(featurizer: &Featurizer, docs: &[TrainingDoc<'_>]) -> Vec<Example> {
    docs.par_iter()
        .flat_map_iter(|d| {
            let gold = GoldBaseline::new(d.gold, usize::MAX - 1);
            d.segments
                .windows(2)
                .map(|w| Example {
                    features: featurizer.featurize(&pair_input(&w[0].text, &w[1].text)),
                    label: usize::from(gold.merge(&w[0], &w[1])),
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn level_examples(featurizer: &Featurizer, max_depth: usize, docs: &[TrainingDoc<'_>]) -> Vec<Example> {
    docs.par_iter()
        .flat_map_iter(|d| {
            gold_units(d.gold, max_depth)
                .into_iter()
                .map(|u| Example {
                    features: featurizer.featurize(&pair_input("", &u.content)),
                    label: u.label.index(max_depth),
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn tag_examples(featurizer: &Featurizer, max_depth: usize, docs: &[TrainingDoc<'_>]) -> Vec<Example> {
    docs.par_iter()
        .flat_map_iter(|d| {
            let gold = GoldBaseline::new(d.gold, max_depth);
            d.segments
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    let left = if i == 0 { "" } else { d.segments[i - 1].text.as_str() };
                    Example {
                        features: featurizer.featurize(&pair_input(left, &s.text)),
                        label: gold.tag(None, s).index(max_depth),
                    }
                })
                .collect::<Vec<_>>()
        })
        .collect()
}

pub fn train_concat_model(featurizer: &Featurizer, docs: &[TrainingDoc<'_>], config: &TrainConfig) -> Result<LinearModel, TrainError> {
    let model = LinearModel::zeros(HeadKind::Concat, 2, featurizer.clone());
    fit(model, concat_examples(featurizer, docs), config)
}

pub fn train_level_model(
    featurizer: &Featurizer,
    max_depth: usize,
    docs: &[TrainingDoc<'_>],
    config: &TrainConfig,
) -> Result<LinearModel, TrainError> {
    let model = LinearModel::zeros(HeadKind::Level, LevelLabel::classes(max_depth), featurizer.clone());
    fit(model, level_examples(featurizer, max_depth, docs), config)
}

pub fn train_tag_model(
    featurizer: &Featurizer,
    max_depth: usize,
    docs: &[TrainingDoc<'_>],
    config: &TrainConfig,
) -> Result<LinearModel, TrainError> {
    let model = LinearModel::zeros(HeadKind::Tag, BioTag::classes(max_depth), featurizer.clone());
    fit(model, tag_examples(featurizer, max_depth, docs), config)
}
