//! Greedy scorer-driven decoding and the static gold oracle.

use serde::Serialize;
use thiserror::Error;

use crate::catalog::{Action, CatalogError, CatalogTree, Joiner, NodeKind, Segment, TransitionState};
use crate::scorer::{ActionExample, ActionScorer, ScorerError, ScoringInput};

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("scorer failure: {0}")]
    Scorer(#[from] ScorerError),
    #[error("segment {found} at position {position}: indices must be contiguous from 0")]
    BadSegments { position: usize, found: usize },
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum OracleError {
    #[error("gold tree is not linearizable: {0}")]
    NotLinearizable(String),
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error("action sequence references segment {0}, which is not the next input")]
    OutOfStep(usize),
    #[error("{0} segments left unconsumed")]
    Unconsumed(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeOptions {
    /// Enforce the first-action and leaf-text constraints. When off, only
    /// structurally impossible actions are substituted.
    pub constrained: bool,
    pub joiner: Joiner,
}

impl Default for DecodeOptions {
    fn default() -> Self {
        DecodeOptions { constrained: true, joiner: Joiner::None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    /// Root-to-focus child indices at the time of the decision.
    pub focus: Vec<usize>,
    pub focus_kind: NodeKind,
    pub segment: Option<usize>,
    pub action: Action,
    pub scores: [f64; 4],
    /// The scorer's top action was not allowed and a lower-ranked one was taken.
    pub forced: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct DecodeTrace {
    pub steps: Vec<TraceStep>,
}

impl DecodeTrace {
    pub fn forced_count(&self) -> usize {
        self.steps.iter().filter(|s| s.forced).count()
    }

    pub fn actions(&self) -> Vec<Action> {
        self.steps.iter().map(|s| s.action).collect()
    }
}

fn check_contiguous(segments: &[Segment]) -> Result<(), DecodeError> {
    match segments.iter().enumerate().find(|(i, s)| s.index != *i) {
        Some((position, s)) => Err(DecodeError::BadSegments { position, found: s.index }),
        None => Ok(()),
    }
}

/// Builds a catalog tree from `segments`, one scorer call per step.
///
/// Stops as soon as the queue is empty; the reduces that would walk the
/// focus back to the root do not change the tree and are not emitted.
pub fn decode<S: ActionScorer + ?Sized>(
    segments: &[Segment],
    scorer: &mut S,
    options: DecodeOptions,
) -> Result<(CatalogTree, DecodeTrace), DecodeError> {
    check_contiguous(segments)?;
    let mut state = TransitionState::new(options.joiner);
    let mut trace = DecodeTrace::default();
    let mut next = 0;
    while let Some(q) = segments.get(next) {
        let focus = state.focus();
        let scores = scorer.score(&ScoringInput {
            s_kind: focus.kind,
            s_content: &focus.content,
            q_content: &q.text,
        })?;
        let allowed = if options.constrained {
            state.legal_actions(false)
        } else {
            state.applicable_actions(false)
        };
        let ranked = scores.ranked();
        let action = ranked
            .into_iter()
            .find(|&a| allowed.contains(a))
            .expect("a non-empty queue always leaves an allowed action");
        let step = TraceStep {
            focus: state.focus_path().to_vec(),
            focus_kind: focus.kind,
            segment: Some(q.index),
            action,
            scores: scores.logits,
            forced: action != ranked[0],
        };
        if options.constrained {
            state.apply(action, Some(q))
        } else {
            state.apply_relaxed(action, Some(q))
        }
        .expect("chosen action is allowed in the current state");
        if action.consumes_input() {
            next += 1;
        }
        trace.steps.push(step);
    }
    Ok((state.into_tree(), trace))
}

/// One gold transition: the action and the pending input segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct OracleStep {
    pub action: Action,
    pub segment: usize,
}

/// Derives the action sequence that rebuilds `gold` from its segments.
pub fn oracle_actions(gold: &CatalogTree) -> Result<Vec<OracleStep>, OracleError> {
    gold.validate().map_err(|e| OracleError::NotLinearizable(e.to_string()))?;

    // owner[i] = (root-to-node path, kind, is first segment of the node)
    let mut owner: Vec<Option<(Vec<usize>, NodeKind, bool)>> = Vec::new();
    fn index(node: &crate::catalog::CatalogNode, path: &mut Vec<usize>, owner: &mut Vec<Option<(Vec<usize>, NodeKind, bool)>>) {
        for (k, &s) in node.segments.iter().enumerate() {
            if owner.len() <= s {
                owner.resize(s + 1, None);
            }
            owner[s] = Some((path.clone(), node.kind, k == 0));
        }
        for (i, c) in node.children.iter().enumerate() {
            path.push(i);
            index(c, path, owner);
            path.pop();
        }
    }
    index(&gold.root, &mut Vec::new(), &mut owner);

    let mut focus: Vec<usize> = Vec::new();
    let mut out = Vec::new();
    for (i, slot) in owner.iter().enumerate() {
        let (path, kind, first) = slot
            .as_ref()
            .ok_or_else(|| OracleError::NotLinearizable(format!("segment {i} is not owned by any node")))?;
        loop {
            if *path == focus {
                if *first {
                    return Err(OracleError::NotLinearizable(format!("segment {i} re-opens a node")));
                }
                out.push(OracleStep { action: Action::Concat, segment: i });
                break;
            }
            if path.len() == focus.len() + 1 && path.starts_with(&focus) {
                if !*first {
                    return Err(OracleError::NotLinearizable(format!(
                        "segment {i} continues a node that is not on the stack"
                    )));
                }
                let action = if *kind == NodeKind::Heading { Action::SubHeading } else { Action::SubText };
                out.push(OracleStep { action, segment: i });
                focus = path.clone();
                break;
            }
            if focus.is_empty() || path.starts_with(&focus) {
                return Err(OracleError::NotLinearizable(format!("segment {i} skips an unopened ancestor")));
            }
            out.push(OracleStep { action: Action::Reduce, segment: i });
            focus.pop();
        }
    }
    Ok(out)
}

/// Applies an action sequence to `segments` under the structural constraints.
pub fn replay(segments: &[Segment], steps: &[OracleStep], joiner: Joiner) -> Result<CatalogTree, ReplayError> {
    let mut state = TransitionState::new(joiner);
    let mut next = 0;
    for step in steps {
        if step.segment != next {
            return Err(ReplayError::OutOfStep(step.segment));
        }
        let q = segments.get(next);
        state.apply(step.action, q)?;
        if step.action.consumes_input() {
            next += 1;
        }
    }
    if next != segments.len() {
        return Err(ReplayError::Unconsumed(segments.len() - next));
    }
    Ok(state.into_tree())
}

/// Replays the oracle over `segments`, recording the scorer's view at each
/// step alongside the gold action.
pub fn action_examples(
    gold: &CatalogTree,
    segments: &[Segment],
    joiner: Joiner,
) -> Result<Vec<ActionExample>, OracleError> {
    let steps = oracle_actions(gold)?;
    let mut state = TransitionState::new(joiner);
    let mut out = Vec::with_capacity(steps.len());
    for step in &steps {
        let q = segments.get(step.segment).ok_or_else(|| {
            OracleError::NotLinearizable(format!("segment {} missing from the stream", step.segment))
        })?;
        let focus = state.focus();
        out.push(ActionExample {
            s_kind: focus.kind,
            s_content: focus.content.clone(),
            q_content: q.text.clone(),
            action: step.action,
        });
        state
            .apply(step.action, Some(q))
            .map_err(|e| OracleError::NotLinearizable(e.to_string()))?;
    }
    Ok(out)
}

/// Row of the training-dump file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActionDumpRow<'a> {
    pub doc_id: &'a str,
    pub step: usize,
    pub s_kind: NodeKind,
    pub s_content: &'a str,
    pub q_content: &'a str,
    pub gold_action: Action,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::CatalogNode;
    use crate::scorer::ActionScores;

    struct Fixed(Vec<Action>, usize);

    impl ActionScorer for Fixed {
        fn score(&mut self, _: &ScoringInput<'_>) -> Result<ActionScores, ScorerError> {
            let a = self.0[self.1.min(self.0.len() - 1)];
            self.1 += 1;
            let mut l = [0.0; 4];
            l[a.index()] = 1.0;
            Ok(ActionScores::from_logits(l))
        }
    }

    struct Always(Action);

    impl ActionScorer for Always {
        fn score(&mut self, _: &ScoringInput<'_>) -> Result<ActionScores, ScorerError> {
            let mut l = [0.0; 4];
            l[self.0.index()] = 5.0;
            Ok(ActionScores::from_logits(l))
        }
    }

    #[test]
    fn single_segment_forces_a_root_child() {
        let segs = Segment::sequence(&["only"]).unwrap();
        for a in Action::ALL {
            let (tree, trace) = decode(&segs, &mut Always(a), DecodeOptions::default()).unwrap();
            assert_eq!(tree.root.children.len(), 1);
            assert!(matches!(trace.steps[0].action, Action::SubHeading | Action::SubText));
            assert_eq!(trace.steps[0].forced, matches!(a, Action::Concat | Action::Reduce));
        }
    }

    #[test]
    fn empty_input_gives_bare_root() {
        let (tree, trace) = decode(&[], &mut Always(Action::Reduce), DecodeOptions::default()).unwrap();
        assert_eq!(tree, CatalogTree::new());
        assert!(trace.steps.is_empty());
    }

    #[test]
    fn constant_reduce_scorer_still_consumes_everything() {
        let segs = Segment::sequence(&["a", "b", "c", "d"]).unwrap();
        let (tree, trace) = decode(&segs, &mut Always(Action::Reduce), DecodeOptions::default()).unwrap();
        tree.validate().unwrap();
        assert_eq!(tree.segment_order(), vec![0, 1, 2, 3]);
        assert_eq!(trace.actions().iter().filter(|a| a.consumes_input()).count(), 4);
    }

    #[test]
    fn unconstrained_allows_children_under_text() {
        let segs = Segment::sequence(&["a", "b"]).unwrap();
        let mut sc = Fixed(vec![Action::SubText, Action::SubHeading], 0);
        let opts = DecodeOptions { constrained: false, ..DecodeOptions::default() };
        let (tree, trace) = decode(&segs, &mut sc, opts).unwrap();
        assert_eq!(trace.forced_count(), 0);
        assert!(tree.validate().is_err());
        tree.validate_structure(true).unwrap();

        // with constraints the same scorer gets its second choice
        let mut sc = Fixed(vec![Action::SubText, Action::SubHeading], 0);
        let (tree, trace) = decode(&segs, &mut sc, DecodeOptions::default()).unwrap();
        tree.validate().unwrap();
        assert!(trace.steps[1].forced);
    }

    #[test]
    fn unconstrained_never_reduces_at_root() {
        let segs = Segment::sequence(&["a", "b", "c"]).unwrap();
        let opts = DecodeOptions { constrained: false, ..DecodeOptions::default() };
        let (tree, trace) = decode(&segs, &mut Always(Action::Reduce), opts).unwrap();
        assert_eq!(tree.segment_order(), vec![0, 1, 2]);
        assert!(trace.steps.iter().all(|s| !(s.focus.is_empty() && s.action == Action::Reduce)));
    }

    #[test]
    fn non_contiguous_segments_rejected() {
        let segs = vec![Segment::new(0, "a").unwrap(), Segment::new(2, "b").unwrap()];
        let err = decode(&segs, &mut Always(Action::SubText), DecodeOptions::default()).unwrap_err();
        assert!(matches!(err, DecodeError::BadSegments { position: 1, found: 2 }));
    }

    #[test]
    fn oracle_single_heading() {
        let t = CatalogTree::from_children(vec![CatalogNode::heading("H1", vec![0])]);
        assert_eq!(oracle_actions(&t).unwrap(), vec![OracleStep { action: Action::SubHeading, segment: 0 }]);
    }

    #[test]
    fn oracle_handles_concat_after_child() {
        // heading continued after its first child was closed
        let t = CatalogTree::from_children(vec![CatalogNode::heading("ac", vec![0, 2])
            .with_children(vec![CatalogNode::text("b", vec![1]), CatalogNode::text("d", vec![3])])]);
        let steps = oracle_actions(&t).unwrap();
        let acts: Vec<_> = steps.iter().map(|s| s.action).collect();
        use Action::*;
        assert_eq!(acts, vec![SubHeading, SubText, Reduce, Concat, SubText]);
        let segs = Segment::sequence(&["a", "b", "c", "d"]).unwrap();
        assert_eq!(replay(&segs, &steps, Joiner::None).unwrap(), t);
    }

    #[test]
    fn oracle_rejects_unlinearizable_trees() {
        let t = CatalogTree::from_children(vec![
            CatalogNode::heading("x", vec![0]),
            CatalogNode::heading("y", vec![2]),
            CatalogNode::heading("z", vec![1]),
        ]);
        assert!(matches!(oracle_actions(&t), Err(OracleError::NotLinearizable(_))));
    }

    #[test]
    fn action_examples_track_partial_content() {
        let t = CatalogTree::from_children(vec![CatalogNode::heading("H", vec![0])
            .with_children(vec![CatalogNode::text("ab", vec![1, 2])])]);
        let segs = Segment::sequence(&["H", "a", "b"]).unwrap();
        let ex = action_examples(&t, &segs, Joiner::None).unwrap();
        assert_eq!(ex.len(), 3);
        assert_eq!(ex[2].s_kind, NodeKind::Text);
        assert_eq!(ex[2].s_content, "a");
        assert_eq!(ex[2].q_content, "b");
        assert_eq!(ex[2].action, Action::Concat);
    }

    #[test]
    fn replay_detects_bad_sequences() {
        let segs = Segment::sequence(&["a", "b"]).unwrap();
        let steps = [OracleStep { action: Action::SubText, segment: 0 }];
        assert!(matches!(replay(&segs, &steps, Joiner::None), Err(ReplayError::Unconsumed(1))));
        let steps = [OracleStep { action: Action::SubText, segment: 1 }];
        assert!(matches!(replay(&segs, &steps, Joiner::None), Err(ReplayError::OutOfStep(1))));
    }
}
