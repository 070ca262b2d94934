//! Training with dev-set model selection and corpus-level evaluation for the
//! transition parser and both baselines.

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::baselines::{self, BioTag, LevelLabel, LinearConcat, LinearLevel, LinearTagger, TrainingDoc};
use crate::catalog::{CatalogTree, Joiner, Segment};
use crate::document::{Document, DocumentError};
use crate::metrics::{self, Evaluation};
use crate::scorer::features::Featurizer;
use crate::scorer::linear::{Example, HeadKind, LinearModel, TrainConfig, TrainError, Trainer};
use crate::scorer::{featurize_actions, new_action_model, LinearScorer};
use crate::transition::{action_examples, decode, DecodeError, DecodeOptions, OracleError};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Document(#[from] DocumentError),
    #[error("document {id}: {source}")]
    Oracle { id: String, source: OracleError },
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error(transparent)]
    Decode(#[from] DecodeError),
    #[error("model file holds heads {0:?}; expected one action head, concat+level heads, or one tag head")]
    UnknownModelSet(Vec<HeadKind>),
}

/// A gold document ready for training or evaluation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sample {
    pub id: String,
    pub segments: Vec<Segment>,
    pub gold: CatalogTree,
}

impl Sample {
    pub fn from_document(doc: &Document) -> Result<Sample, DocumentError> {
        Ok(Sample { id: doc.id.clone(), segments: doc.segment_list()?, gold: doc.tree.clone() })
    }
}

pub fn samples(docs: &[Document]) -> Result<Vec<Sample>, DocumentError> {
    docs.par_iter().map(Sample::from_document).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Transition,
    Pipeline,
    Tagging,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "transition" => Ok(Method::Transition),
            "pipeline" => Ok(Method::Pipeline),
            "tagging" => Ok(Method::Tagging),
            o => Err(format!("unknown method `{o}` (expected transition|pipeline|tagging)")),
        }
    }
}

/// The trained heads of one method.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSet {
    Transition(LinearModel),
    Pipeline { concat: LinearModel, level: LinearModel },
    Tagging(LinearModel),
}

impl ModelSet {
    pub fn from_models(models: Vec<LinearModel>) -> Result<ModelSet, ExperimentError> {
        let heads: Vec<HeadKind> = models.iter().map(|m| m.head()).collect();
        let mut it = models.into_iter();
        match heads.as_slice() {
            [HeadKind::Action] => Ok(ModelSet::Transition(it.next().expect("one model"))),
            [HeadKind::Tag] => Ok(ModelSet::Tagging(it.next().expect("one model"))),
            [HeadKind::Concat, HeadKind::Level] => {
                let concat = it.next().expect("two models");
                let level = it.next().expect("two models");
                Ok(ModelSet::Pipeline { concat, level })
            }
            _ => Err(ExperimentError::UnknownModelSet(heads)),
        }
    }

    pub fn method(&self) -> Method {
        match self {
            ModelSet::Transition(_) => Method::Transition,
            ModelSet::Pipeline { .. } => Method::Pipeline,
            ModelSet::Tagging(_) => Method::Tagging,
        }
    }

    pub fn models(&self) -> Vec<&LinearModel> {
        match self {
            ModelSet::Transition(m) | ModelSet::Tagging(m) => vec![m],
            ModelSet::Pipeline { concat, level } => vec![concat, level],
        }
    }

    /// Predicts one tree. `constrained` only affects the transition parser.
    pub fn predict(&self, segments: &[Segment], joiner: Joiner, constrained: bool) -> Result<CatalogTree, DecodeError> {
        match self {
            ModelSet::Transition(m) => {
                let mut scorer = LinearScorer::new(m)?;
                Ok(decode(segments, &mut scorer, DecodeOptions { constrained, joiner })?.0)
            }
            ModelSet::Pipeline { concat, level } => Ok(baselines::pipeline_predict(
                segments,
                joiner,
                &LinearConcat(concat),
                &LinearLevel { model: level, max_depth: baselines::max_depth_of(level) },
            )),
            ModelSet::Tagging(m) => Ok(baselines::tagging_predict(
                segments,
                joiner,
                &LinearTagger { model: m, max_depth: baselines::max_depth_of(m) },
            )),
        }
    }

    /// Predicts every sample in parallel, keeping input order.
    pub fn predict_all(&self, samples: &[Sample], joiner: Joiner, constrained: bool) -> Result<Vec<CatalogTree>, DecodeError> {
        samples.par_iter().map(|s| self.predict(&s.segments, joiner, constrained)).collect()
    }

    pub fn evaluate(&self, samples: &[Sample], joiner: Joiner, constrained: bool) -> Result<Evaluation, DecodeError> {
        let preds = self.predict_all(samples, joiner, constrained)?;
        Ok(evaluate_predictions(samples, &preds))
    }
}

/// Micro-aggregated evaluation; an empty corpus yields all-zero counts.
pub fn evaluate_predictions(samples: &[Sample], preds: &[CatalogTree]) -> Evaluation {
    let per_doc: Vec<Evaluation> = samples.iter().zip(preds).map(|(s, p)| metrics::evaluate(&s.gold, p)).collect();
    metrics::aggregate(&per_doc).unwrap_or_default()
}

#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub method: Method,
    pub train: TrainConfig,
    pub joiner: Joiner,
    pub max_depth: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            method: Method::Transition,
            train: TrainConfig::default(),
            joiner: Joiner::None,
            max_depth: baselines::DEFAULT_MAX_DEPTH,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean training loss per head, summed over heads.
    pub train_loss: f64,
    /// Absent when no dev set was given.
    pub dev_f1: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub models: ModelSet,
    pub best_epoch: usize,
    pub history: Vec<EpochRecord>,
}

/// Oracle supervision for the transition parser.
pub fn action_training_set(
    featurizer: &Featurizer,
    train: &[Sample],
    joiner: Joiner,
) -> Result<Vec<Example>, ExperimentError> {
    let texts = train
        .par_iter()
        .map(|s| {
            action_examples(&s.gold, &s.segments, joiner).map_err(|e| ExperimentError::Oracle { id: s.id.clone(), source: e })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let flat: Vec<_> = texts.into_iter().flatten().collect();
    Ok(featurize_actions(featurizer, &flat))
}

fn training_docs(train: &[Sample]) -> Vec<TrainingDoc<'_>> {
    train.iter().map(|s| TrainingDoc { segments: &s.segments, gold: &s.gold }).collect()
}

/// Trains one method for `config.train.epochs` epochs and keeps the epoch
/// with the best dev overall F1 (earliest on ties). Without a dev set the
/// last epoch is kept.
pub fn train_method(
    featurizer: &Featurizer,
    train: &[Sample],
    dev: &[Sample],
    config: &ExperimentConfig,
    mut on_epoch: impl FnMut(&EpochRecord),
) -> Result<Trained, ExperimentError> {
    let d = config.max_depth;
    let docs = training_docs(train);
    let heads: Vec<(LinearModel, Vec<Example>)> = match config.method {
        Method::Transition => vec![(new_action_model(featurizer.clone()), action_training_set(featurizer, train, config.joiner)?)],
        Method::Pipeline => vec![
            (LinearModel::zeros(HeadKind::Concat, 2, featurizer.clone()), baselines::concat_examples(featurizer, &docs)),
            (
                LinearModel::zeros(HeadKind::Level, LevelLabel::classes(d), featurizer.clone()),
                baselines::level_examples(featurizer, d, &docs),
            ),
        ],
        Method::Tagging => vec![(
            LinearModel::zeros(HeadKind::Tag, BioTag::classes(d), featurizer.clone()),
            baselines::tag_examples(featurizer, d, &docs),
        )],
    };
    // a document set with a single segment each has no adjacent pairs; the
    // concat head then keeps its zero weights
    let mut trainers: Vec<Option<Trainer<'_>>> = Vec::new();
    let mut idle: Vec<LinearModel> = Vec::new();
    for (model, examples) in &heads {
        if examples.is_empty() && model.head() == HeadKind::Concat {
            trainers.push(None);
            idle.push(model.clone());
        } else {
            trainers.push(Some(Trainer::new(model.clone(), examples, config.train.clone())?));
        }
    }
    let snapshot = |trainers: &[Option<Trainer<'_>>]| -> Result<ModelSet, ExperimentError> {
        let mut idle_iter = idle.iter();
        let models = trainers
            .iter()
            .map(|t| match t {
                Some(t) => t.model().clone(),
                None => idle_iter.next().expect("idle head").clone(),
            })
            .collect();
        ModelSet::from_models(models)
    };

    let mut history = Vec::new();
    let mut best: Option<(f64, usize, ModelSet)> = None;
    for epoch in 1..=config.train.epochs {
        let mut loss = 0.0;
        for t in trainers.iter_mut().flatten() {
            loss += t.run_epoch()?;
        }
        let models = snapshot(&trainers)?;
        let dev_f1 = if dev.is_empty() {
            None
        } else {
            Some(models.evaluate(dev, config.joiner, true)?.overall.prf().f1)
        };
        let record = EpochRecord { epoch, train_loss: loss, dev_f1 };
        on_epoch(&record);
        history.push(record);
        let score = dev_f1.unwrap_or(f64::INFINITY);
        if best.as_ref().is_none_or(|(b, _, _)| score > *b || dev_f1.is_none()) {
            best = Some((score, epoch, models));
        }
    }
    let (_, best_epoch, models) = best.expect("at least one epoch");
    Ok(Trained { models, best_epoch, history })
}
