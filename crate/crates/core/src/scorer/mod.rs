//! Action scoring: the scorer interface used by the decoder, the built-in
//! linear backend, and a bridge to scorers running in another process.

pub mod bridge;
pub mod features;
pub mod linear;

use rayon::prelude::*;
use thiserror::Error;

use crate::catalog::{Action, NodeKind};

pub use bridge::{BridgeConfig, BridgeScorer};
pub use features::{FeatureInput, Featurizer, NumberingPatterns, SparseVector, DEFAULT_DIM};
pub use linear::{softmax, Example, HeadKind, LinearModel, ModelError, TrainConfig, TrainError, Trainer};

#[derive(Debug, Error)]
pub enum ScorerError {
    #[error("bridge I/O failure: {0}")]
    BridgeIo(String),
    #[error("bridge protocol violation: {0}")]
    BridgeProtocol(String),
    #[error("model head {found:?} with {classes} classes cannot score actions")]
    WrongHead { found: HeadKind, classes: usize },
}

/// What the scorer sees at each step: the stack top and the next segment.
#[derive(Debug, Clone, Copy)]
pub struct ScoringInput<'a> {
    pub s_kind: NodeKind,
    pub s_content: &'a str,
    pub q_content: &'a str,
}

impl<'a> ScoringInput<'a> {
    pub fn features(&self) -> FeatureInput<'a> {
        FeatureInput { context: Some(self.s_kind), left: self.s_content, right: self.q_content }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionScores {
    pub logits: [f64; 4],
    pub probabilities: [f64; 4],
}

impl ActionScores {
    pub fn from_logits(logits: [f64; 4]) -> ActionScores {
        let p = softmax(&logits);
        ActionScores { logits, probabilities: [p[0], p[1], p[2], p[3]] }
    }

    pub fn argmax(&self) -> Action {
        self.ranked()[0]
    }

    /// Actions by descending score; equal scores keep declaration order.
    pub fn ranked(&self) -> [Action; 4] {
        let mut order = Action::ALL;
        order.sort_by(|a, b| self.logits[b.index()].total_cmp(&self.logits[a.index()]));
        order
    }
}

pub trait ActionScorer {
    fn score(&mut self, input: &ScoringInput<'_>) -> Result<ActionScores, ScorerError>;
}

impl<T: ActionScorer + ?Sized> ActionScorer for &mut T {
    fn score(&mut self, input: &ScoringInput<'_>) -> Result<ActionScores, ScorerError> {
        (**self).score(input)
    }
}

impl<T: ActionScorer + ?Sized> ActionScorer for Box<T> {
    fn score(&mut self, input: &ScoringInput<'_>) -> Result<ActionScores, ScorerError> {
        (**self).score(input)
    }
}

/// Read-only view of an action head; cheap to copy into worker threads.
#[derive(Debug, Clone, Copy)]
pub struct LinearScorer<'m> {
    model: &'m LinearModel,
}

impl<'m> LinearScorer<'m> {
    pub fn new(model: &'m LinearModel) -> Result<LinearScorer<'m>, ScorerError> {
        if model.head() != HeadKind::Action || model.classes() != Action::COUNT {
            return Err(ScorerError::WrongHead { found: model.head(), classes: model.classes() });
        }
        Ok(LinearScorer { model })
    }

    pub fn scores(&self, input: &ScoringInput<'_>) -> ActionScores {
        let l = self.model.logits(&self.model.featurize(&input.features()));
        ActionScores::from_logits([l[0], l[1], l[2], l[3]])
    }
}

impl ActionScorer for LinearScorer<'_> {
    fn score(&mut self, input: &ScoringInput<'_>) -> Result<ActionScores, ScorerError> {
        Ok(self.scores(input))
    }
}

/// A supervised (state, gold action) pair in text form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionExample {
    pub s_kind: NodeKind,
    pub s_content: String,
    pub q_content: String,
    pub action: Action,
}

impl ActionExample {
    pub fn input(&self) -> ScoringInput<'_> {
        ScoringInput { s_kind: self.s_kind, s_content: &self.s_content, q_content: &self.q_content }
    }
}

pub fn featurize_actions(featurizer: &Featurizer, examples: &[ActionExample]) -> Vec<Example> {
    examples
        .par_iter()
        .map(|e| Example { features: featurizer.featurize(&e.input().features()), label: e.action.index() })
        .collect()
}

pub fn new_action_model(featurizer: Featurizer) -> LinearModel {
    LinearModel::zeros(HeadKind::Action, Action::COUNT, featurizer)
}

/// Trains an action head from scratch on text examples.
pub fn train_action_model(
    featurizer: Featurizer,
    examples: &[ActionExample],
    config: &TrainConfig,
) -> Result<LinearModel, TrainError> {
    if examples.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let data = featurize_actions(&featurizer, examples);
    linear::train(new_action_model(featurizer), &data, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_model_is_uniform() {
        let m = new_action_model(Featurizer::new(DEFAULT_DIM, 1, NumberingPatterns::builtin()));
        let s = LinearScorer::new(&m).unwrap();
        let sc = s.scores(&ScoringInput { s_kind: NodeKind::Root, s_content: "", q_content: "1. Introduction" });
        for p in sc.probabilities {
            assert!((p - 0.25).abs() < 1e-15);
        }
        // all tied: declaration order wins
        assert_eq!(sc.argmax(), Action::SubHeading);
        assert_eq!(sc.ranked(), Action::ALL);
    }

    #[test]
    fn ranking_sorts_descending() {
        let sc = ActionScores::from_logits([0.1, 2.0, -1.0, 2.0]);
        assert_eq!(sc.ranked(), [Action::SubText, Action::Reduce, Action::SubHeading, Action::Concat]);
        assert!((sc.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn wrong_head_is_rejected() {
        let m = LinearModel::zeros(HeadKind::Tag, 18, Featurizer::new(1 << 12, 1, NumberingPatterns::builtin()));
        assert!(matches!(LinearScorer::new(&m), Err(ScorerError::WrongHead { .. })));
    }

    #[test]
    fn one_example_per_action_is_learned() {
        let fz = Featurizer::new(1 << 12, 3, NumberingPatterns::builtin());
        let ex = vec![
            ActionExample { s_kind: NodeKind::Root, s_content: String::new(), q_content: "第一章 总则".into(), action: Action::SubHeading },
            ActionExample { s_kind: NodeKind::Heading, s_content: "第一章 总则".into(), q_content: "本办法适用于全部项目。".into(), action: Action::SubText },
            ActionExample { s_kind: NodeKind::Text, s_content: "本办法适用于".into(), q_content: "全部项目。".into(), action: Action::Concat },
            ActionExample { s_kind: NodeKind::Text, s_content: "本办法适用于全部项目。".into(), q_content: "第二章 附则".into(), action: Action::Reduce },
        ];
        let cfg = TrainConfig { learning_rate: 0.05, ..TrainConfig::default() };
        let model = train_action_model(fz, &ex, &cfg).unwrap();
        let scorer = LinearScorer::new(&model).unwrap();
        for e in &ex {
            assert_eq!(scorer.scores(&e.input()).argmax(), e.action);
        }
        assert_eq!(train_action_model(model.featurizer().clone(), &[], &cfg).unwrap_err(), TrainError::EmptyTrainingSet);
    }
}
