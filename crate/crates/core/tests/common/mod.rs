#![allow(dead_code)]

use catree::catalog::{Action, CatalogNode, CatalogTree, Joiner, Segment, TransitionState};
use catree::scorer::{ActionScorer, ActionScores, ScorerError, ScoringInput};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const WORKED_SEGMENTS: [&str; 6] = [
    "Credit Rating Report",
    "Debt Situation",
    "The balance",
    "was 474 billion yuan.",
    "Security Analysis",
    "Texts",
];

pub const WORKED_ACTIONS: [Action; 8] = [
    Action::SubHeading,
    Action::SubHeading,
    Action::SubText,
    Action::Concat,
    Action::Reduce,
    Action::Reduce,
    Action::SubHeading,
    Action::SubText,
];

pub fn worked_segments() -> Vec<Segment> {
    Segment::sequence(&WORKED_SEGMENTS).unwrap()
}

pub fn worked_tree() -> CatalogTree {
    CatalogTree::from_children(vec![CatalogNode::heading("Credit Rating Report", vec![0]).with_children(vec![
        CatalogNode::heading("Debt Situation", vec![1])
            .with_children(vec![CatalogNode::text("The balance was 474 billion yuan.", vec![2, 3])]),
        CatalogNode::heading("Security Analysis", vec![4]).with_children(vec![CatalogNode::text("Texts", vec![5])]),
    ])])
}

/// Returns the scripted actions in order, one per call.
pub struct Scripted {
    pub actions: Vec<Action>,
    pub next: usize,
}

impl Scripted {
    pub fn new(actions: &[Action]) -> Scripted {
        Scripted { actions: actions.to_vec(), next: 0 }
    }
}

impl ActionScorer for Scripted {
    fn score(&mut self, _: &ScoringInput<'_>) -> Result<ActionScores, ScorerError> {
        let a = self.actions[self.next.min(self.actions.len() - 1)];
        self.next += 1;
        let mut l = [0.0; 4];
        l[a.index()] = 5.0;
        Ok(ActionScores::from_logits(l))
    }
}

pub struct Constant(pub Action);

impl ActionScorer for Constant {
    fn score(&mut self, _: &ScoringInput<'_>) -> Result<ActionScores, ScorerError> {
        let mut l = [0.0; 4];
        l[self.0.index()] = 1.0;
        Ok(ActionScores::from_logits(l))
    }
}

pub struct RandomScorer(pub ChaCha8Rng);

impl ActionScorer for RandomScorer {
    fn score(&mut self, _: &ScoringInput<'_>) -> Result<ActionScores, ScorerError> {
        let l = [0; 4].map(|_| self.0.gen_range(-3.0..3.0));
        Ok(ActionScores::from_logits(l))
    }
}

/// Negates another scorer: its favourite action becomes the least liked.
pub struct Negated<S>(pub S);

impl<S: ActionScorer> ActionScorer for Negated<S> {
    fn score(&mut self, input: &ScoringInput<'_>) -> Result<ActionScores, ScorerError> {
        let s = self.0.score(input)?;
        Ok(ActionScores::from_logits(s.logits.map(|l| -l)))
    }
}

/// Builds a tree by applying random legal actions to a fresh state, with
/// distinct segment texts `s0`, `s1`, ... Returns the segments and the tree.
pub fn random_legal_tree(seed: u64, max_segments: usize, max_depth: usize, joiner: Joiner) -> (Vec<Segment>, CatalogTree) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(0..=max_segments);
    let segments: Vec<Segment> = (0..n).map(|i| Segment::new(i, &format!("s{i}")).unwrap()).collect();
    let mut state = TransitionState::new(joiner);
    let mut next = 0;
    while next < n {
        let legal: Vec<Action> = state
            .legal_actions(false)
            .iter()
            .filter(|a| !(matches!(a, Action::SubHeading | Action::SubText) && state.depth() >= max_depth))
            .collect();
        let a = legal[rng.gen_range(0..legal.len())];
        state.apply(a, Some(&segments[next])).unwrap();
        state.tree().validate().unwrap();
        if a.consumes_input() {
            next += 1;
        }
    }
    (segments, state.into_tree())
}
