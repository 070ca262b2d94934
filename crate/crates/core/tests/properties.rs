mod common;

use catree::baselines::{
    gold_units, pipeline_predict, tagging_predict, BioTag, ConcatClassifier, GoldBaseline, LevelClassifier, LevelLabel, Tagger,
};
use catree::catalog::{Action, Joiner, NodeKind, Segment};
use catree::corpus::{chunk_document, generate_document, split_content, ChunkConfig, GenConfig};
use catree::metrics::evaluate;
use catree::scorer::linear::softmax;
use catree::transition::{decode, oracle_actions, replay, DecodeOptions};
use common::*;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn joiner() -> impl Strategy<Value = Joiner> {
    prop_oneof![Just(Joiner::None), Just(Joiner::Space)]
}

fn segments_from(texts: &[String]) -> Vec<Segment> {
    Segment::sequence(texts).unwrap()
}

fn sorted(mut v: Vec<usize>) -> Vec<usize> {
    v.sort_unstable();
    v
}

fn segment_texts() -> impl Strategy<Value = Vec<String>> {
    prop::collection::vec("[a-z0-9一二三章节。]{1,12}", 0..40)
}

/// Replays a fixed list of answers, indexed by segment.
#[derive(Debug)]
struct Canned {
    merges: Vec<bool>,
    labels: Vec<LevelLabel>,
    tags: Vec<BioTag>,
}

impl ConcatClassifier for Canned {
    fn merge(&self, _: &Segment, next: &Segment) -> bool {
        self.merges[next.index % self.merges.len()]
    }
}

impl LevelClassifier for Canned {
    fn level(&self, _: &str, segments: &[usize]) -> LevelLabel {
        self.labels[segments[0] % self.labels.len()]
    }
}

impl Tagger for Canned {
    fn tag(&self, _: Option<&Segment>, segment: &Segment) -> BioTag {
        self.tags[segment.index % self.tags.len()]
    }
}

fn level_label() -> impl Strategy<Value = LevelLabel> {
    prop_oneof![(1usize..12).prop_map(LevelLabel::Heading), Just(LevelLabel::Text)]
}

fn canned() -> impl Strategy<Value = Canned> {
    (
        prop::collection::vec(any::<bool>(), 1..20),
        prop::collection::vec(level_label(), 1..20),
        prop::collection::vec((any::<bool>(), level_label()).prop_map(|(begin, label)| BioTag { begin, label }), 1..20),
    )
        .prop_map(|(merges, labels, tags)| Canned { merges, labels, tags })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_legal_actions_keep_the_tree_valid(seed in any::<u64>(), depth in 1usize..8, j in joiner()) {
        let (segments, tree) = random_legal_tree(seed, 60, depth, j);
        prop_assert!(tree.validate_against(&segments, j).is_ok());
        prop_assert_eq!(sorted(tree.segment_order()), (0..segments.len()).collect::<Vec<_>>());
        let mut text_parent = false;
        tree.root.walk(0, &mut |n, _| text_parent |= n.kind == NodeKind::Text && !n.children.is_empty());
        prop_assert!(!text_parent);
    }

    #[test]
    fn oracle_replay_round_trips(seed in any::<u64>(), depth in 1usize..8, j in joiner()) {
        let (segments, tree) = random_legal_tree(seed, 60, depth, j);
        let steps = oracle_actions(&tree).unwrap();
        prop_assert_eq!(steps.iter().filter(|s| s.action.consumes_input()).count(), segments.len());
        prop_assert_eq!(replay(&segments, &steps, j).unwrap(), tree);
    }

    #[test]
    fn generated_documents_round_trip_after_chunking(idx in 0u64..10_000, p in 0.0f64..=1.0, j in joiner()) {
        let cfg = GenConfig { seed: idx / 100, ..GenConfig::default() };
        let doc = generate_document(&cfg, idx);
        let c = chunk_document(&doc.tree, &ChunkConfig { paragraph_chunk_probability: p, ..ChunkConfig::default() }, j, idx);
        prop_assert!(c.gold.validate_against(&c.segments, j).is_ok());
        let steps = oracle_actions(&c.gold).unwrap();
        prop_assert_eq!(replay(&c.segments, &steps, j).unwrap(), c.gold.clone());
        let original: Vec<_> = doc.tree.flatten().into_iter().map(|t| (t.level, t.kind)).collect();
        let chunked: Vec<_> = c.gold.flatten().into_iter().map(|t| (t.level, t.kind)).collect();
        prop_assert_eq!(original, chunked);
    }

    #[test]
    fn decoding_consumes_every_segment(texts in segment_texts(), seed in any::<u64>(), constrained in any::<bool>(), j in joiner()) {
        let segments = segments_from(&texts);
        let mut scorer = RandomScorer(ChaCha8Rng::seed_from_u64(seed));
        let (tree, trace) = decode(&segments, &mut scorer, DecodeOptions { constrained, joiner: j }).unwrap();
        prop_assert_eq!(trace.steps.iter().filter(|s| s.action.consumes_input()).count(), segments.len());
        prop_assert_eq!(sorted(tree.segment_order()), (0..segments.len()).collect::<Vec<_>>());
        if constrained {
            prop_assert!(tree.validate_against(&segments, j).is_ok());
            if let Some(first) = trace.steps.first() {
                prop_assert!(matches!(first.action, Action::SubHeading | Action::SubText));
            }
        }
    }

    #[test]
    fn softmax_ignores_shifts(logits in prop::collection::vec(-50.0f64..50.0, 1..20), shift in -1e3f64..1e3) {
        let a = softmax(&logits);
        let shifted: Vec<f64> = logits.iter().map(|l| l + shift).collect();
        let b = softmax(&shifted);
        prop_assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9);
            prop_assert!(*x >= 0.0);
        }
    }

    #[test]
    fn swapping_gold_and_prediction_swaps_precision_and_recall(s1 in any::<u64>(), s2 in any::<u64>()) {
        let (_, a) = random_legal_tree(s1, 30, 4, Joiner::None);
        let (_, b) = random_legal_tree(s2, 30, 4, Joiner::None);
        let ab = evaluate(&a, &b).overall;
        let ba = evaluate(&b, &a).overall;
        prop_assert_eq!(ab.matched, ba.matched);
        prop_assert_eq!(ab.prf().precision, ba.prf().recall);
        prop_assert_eq!(ab.prf().recall, ba.prf().precision);
        prop_assert_eq!(ab.prf().f1, ba.prf().f1);
        let f = ab.prf().f1;
        prop_assert!((0.0..=1.0).contains(&f));
    }

    #[test]
    fn split_content_preserves_text(
        content in "[a-z中文，。 ]{1,400}",
        lo in 1usize..30,
        extra in 0usize..40,
        seed in any::<u64>(),
        j in joiner(),
    ) {
        let content = catree::catalog::normalize_segment_text(&content);
        prop_assume!(!content.is_empty());
        let range = (lo, lo + extra);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pieces = split_content(&content, range, &mut rng, j);
        prop_assert_eq!(j.join_all(pieces.iter().map(String::as_str)), content.clone());
        for p in &pieces {
            prop_assert!(!p.is_empty());
            prop_assert_eq!(p.trim(), p.as_str());
        }
        if j == Joiner::None {
            prop_assert_eq!(pieces.concat(), content);
        }
    }

    #[test]
    fn baselines_build_valid_trees_from_any_output(texts in segment_texts(), c in canned(), j in joiner()) {
        let segments = segments_from(&texts);
        for tree in [pipeline_predict(&segments, j, &c, &c), tagging_predict(&segments, j, &c)] {
            prop_assert!(tree.validate_against(&segments, j).is_ok());
            prop_assert_eq!(sorted(tree.segment_order()), (0..segments.len()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn gold_classifiers_reproduce_generated_trees(idx in 0u64..10_000, j in joiner()) {
        let doc = generate_document(&GenConfig { seed: idx % 7, ..GenConfig::default() }, idx);
        let c = chunk_document(&doc.tree, &ChunkConfig::default(), j, idx);
        let gold = GoldBaseline::new(&c.gold, 8);
        prop_assert_eq!(pipeline_predict(&c.segments, j, &gold, &gold), c.gold.clone());
        prop_assert_eq!(tagging_predict(&c.segments, j, &gold), c.gold.clone());
        prop_assert_eq!(gold_units(&c.gold, 8).iter().map(|u| u.segments.len()).sum::<usize>(), c.segments.len());
    }
}
