//! Feature-hashing linear softmax classifier, trained with AdamW.
//!
//! Weights are stored feature-major (`weights[feature * classes + class]`)
//! so that one sparse feature touches a contiguous run of the matrix.
//!
//! Model file layout (all integers and floats little-endian); a file is one
//! or more head blocks written back to back:
//!
//! | bytes            | field                                   |
//! |------------------|-----------------------------------------|
//! | 4                | magic: `CTXM` action, `CTXC` concat, `CTXL` level, `CTXT` tag |
//! | 4 (u32)          | format version (currently 1)            |
//! | 4 (u32)          | feature dimension D                     |
//! | 4 (u32)          | class count C                           |
//! | 8 (u64)          | hash seed                               |
//! | 4 (u32)          | number of extra numbering patterns P    |
//! | P × (4 + n)      | each pattern: u32 byte length + UTF-8   |
//! | 8 × D × C (f64)  | weights, feature-major                  |
//! | 8 × C (f64)      | bias                                    |

use std::collections::HashMap;
use std::io::{self, Read, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::features::{FeatureInput, Featurizer, NumberingPatterns, SparseVector};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    Action,
    Concat,
    Level,
    Tag,
}

impl HeadKind {
    pub fn magic(self) -> &'static [u8; 4] {
        match self {
            HeadKind::Action => b"CTXM",
            HeadKind::Concat => b"CTXC",
            HeadKind::Level => b"CTXL",
            HeadKind::Tag => b"CTXT",
        }
    }

    fn from_magic(m: &[u8; 4]) -> Option<HeadKind> {
        [HeadKind::Action, HeadKind::Concat, HeadKind::Level, HeadKind::Tag]
            .into_iter()
            .find(|h| h.magic() == m)
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("bad model file: {0}")]
    Format(String),
}

#[derive(Debug, Error, PartialEq)]
pub enum TrainError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("label {label} out of range for {classes} classes")]
    BadLabel { label: usize, classes: usize },
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("training diverged (non-finite loss)")]
    Diverged,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    pub seed: u64,
    /// Inverse-frequency class weights in the loss.
    pub class_weighting: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-3,
            epochs: 10,
            batch_size: 20,
            weight_decay: 0.01,
            seed: 0,
            class_weighting: false,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::BadConfig(m.to_owned()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return bad("epochs and batch size must be positive");
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.epsilon > 0.0) {
            return bad("adam moments must be in [0, 1) and epsilon positive");
        }
        Ok(())
    }
}

/// One featurized training example.
#[derive(Debug, Clone, PartialEq)]
pub struct Example {
    pub features: SparseVector,
    pub label: usize,
}

#[derive(Debug, Clone)]
pub struct LinearModel {
    head: HeadKind,
    classes: usize,
    featurizer: Featurizer,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl PartialEq for LinearModel {
    fn eq(&self, other: &Self) -> bool {
        self.head == other.head
            && self.classes == other.classes
            && self.featurizer.dim() == other.featurizer.dim()
            && self.featurizer.seed() == other.featurizer.seed()
            && self.featurizer.patterns().extra() == other.featurizer.patterns().extra()
            && self.weights.iter().map(|w| w.to_bits()).eq(other.weights.iter().map(|w| w.to_bits()))
            && self.bias.iter().map(|w| w.to_bits()).eq(other.bias.iter().map(|w| w.to_bits()))
    }
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl LinearModel {
    pub fn zeros(head: HeadKind, classes: usize, featurizer: Featurizer) -> LinearModel {
        assert!(classes >= 2, "a classifier needs at least two classes");
        LinearModel {
            head,
            classes,
            weights: vec![0.0; featurizer.dim() * classes],
            bias: vec![0.0; classes],
            featurizer,
        }
    }

    pub fn head(&self) -> HeadKind {
        self.head
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn dim(&self) -> usize {
        self.featurizer.dim()
    }

    pub fn featurizer(&self) -> &Featurizer {
        &self.featurizer
    }

    pub fn weight(&self, feature: u32, class: usize) -> f64 {
        self.weights[feature as usize * self.classes + class]
    }

    pub fn set_weight(&mut self, feature: u32, class: usize, value: f64) {
        self.weights[feature as usize * self.classes + class] = value;
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn featurize(&self, input: &FeatureInput<'_>) -> SparseVector {
        self.featurizer.featurize(input)
    }

    pub fn logits(&self, x: &SparseVector) -> Vec<f64> {
        let mut out = self.bias.clone();
        for (f, v) in x.iter() {
            let row = &self.weights[f as usize * self.classes..(f as usize + 1) * self.classes];
            for (o, w) in out.iter_mut().zip(row) {
                *o += w * v;
            }
        }
        out
    }

    pub fn predict(&self, x: &SparseVector) -> usize {
        argmax(&self.logits(x))
    }

    pub fn predict_input(&self, input: &FeatureInput<'_>) -> usize {
        self.predict(&self.featurize(input))
    }

    /// Cross-entropy of one example and its gradient: per touched feature
    /// the `classes`-long gradient row, plus the bias gradient.
    pub fn loss_and_gradient(&self, ex: &Example) -> (f64, Vec<(u32, Vec<f64>)>, Vec<f64>) {
        let logits = self.logits(&ex.features);
        let probs = softmax(&logits);
        let loss = -probs[ex.label].max(f64::MIN_POSITIVE).ln();
        let mut delta = probs;
        delta[ex.label] -= 1.0;
        let rows = ex
            .features
            .iter()
            .map(|(f, v)| (f, delta.iter().map(|d| d * v).collect()))
            .collect();
        (loss, rows, delta)
    }

    pub fn mean_loss(&self, examples: &[Example]) -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        examples
            .iter()
            .map(|ex| {
                let p = softmax(&self.logits(&ex.features));
                -p[ex.label].max(f64::MIN_POSITIVE).ln()
            })
            .sum::<f64>()
            / examples.len() as f64
    }

    pub fn accuracy(&self, examples: &[Example]) -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        let hits = examples.iter().filter(|ex| self.predict(&ex.features) == ex.label).count();
        hits as f64 / examples.len() as f64
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(self.head.magic())?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.dim() as u32).to_le_bytes())?;
        w.write_all(&(self.classes as u32).to_le_bytes())?;
        w.write_all(&self.featurizer.seed().to_le_bytes())?;
        let extra = self.featurizer.patterns().extra();
        w.write_all(&(extra.len() as u32).to_le_bytes())?;
        for p in extra {
            w.write_all(&(p.len() as u32).to_le_bytes())?;
            w.write_all(p.as_bytes())?;
        }
        let mut buf = Vec::with_capacity(8 * (self.weights.len() + self.bias.len()));
        for x in self.weights.iter().chain(&self.bias) {
            buf.extend_from_slice(&x.to_le_bytes());
        }
        w.write_all(&buf)
    }

    /// Reads one head block; `Ok(None)` at a clean end of input.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Option<LinearModel>, ModelError> {
        let mut magic = [0u8; 4];
        let mut got = 0;
        while got < 4 {
            let n = r.read(&mut magic[got..])?;
            if n == 0 {
                if got == 0 {
                    return Ok(None);
                }
                return Err(ModelError::Format("truncated magic".into()));
            }
            got += n;
        }
        let head = HeadKind::from_magic(&magic)
            .ok_or_else(|| ModelError::Format(format!("unknown magic {:?}", String::from_utf8_lossy(&magic))))?;
        let version = read_u32(r)?;
        if version != FORMAT_VERSION {
            return Err(ModelError::Format(format!("unsupported version {version}")));
        }
        let dim = read_u32(r)? as usize;
        let classes = read_u32(r)? as usize;
        let mut seed = [0u8; 8];
        r.read_exact(&mut seed)?;
        let seed = u64::from_le_bytes(seed);
        let n_extra = read_u32(r)? as usize;
        let mut extra = Vec::with_capacity(n_extra);
        for _ in 0..n_extra {
            let len = read_u32(r)? as usize;
            let mut b = vec![0u8; len];
            r.read_exact(&mut b)?;
            extra.push(String::from_utf8(b).map_err(|e| ModelError::Format(e.to_string()))?);
        }
        let patterns = NumberingPatterns::with_extra(&extra).map_err(|e| ModelError::Format(e.to_string()))?;
        if classes < 2 || dim == 0 {
            return Err(ModelError::Format(format!("bad shape {dim}x{classes}")));
        }
        let featurizer = Featurizer::new(dim, seed, patterns);
        let mut payload = vec![0u8; 8 * (dim * classes + classes)];
        r.read_exact(&mut payload)?;
        let mut floats = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let weights: Vec<f64> = floats.by_ref().take(dim * classes).collect();
        let bias: Vec<f64> = floats.collect();
        Ok(Some(LinearModel { head, classes, featurizer, weights, bias }))
    }
}

fn read_u32<R: Read>(r: &mut R) -> io::Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub fn write_models<W: Write>(mut w: W, models: &[&LinearModel]) -> io::Result<()> {
    for m in models {
        m.write_to(&mut w)?;
    }
    w.flush()
}

pub fn read_models<R: Read>(mut r: R) -> Result<Vec<LinearModel>, ModelError> {
    let mut out = Vec::new();
    while let Some(m) = LinearModel::read_from(&mut r)? {
        out.push(m);
    }
    if out.is_empty() {
        return Err(ModelError::Format("empty model file".into()));
    }
    Ok(out)
}

/// Mini-batch AdamW over a sparse linear model.
///
/// Moments are updated lazily: a weight's moments and decay advance only on
/// steps where the batch touches its feature. Bias moments advance every step.
pub struct Trainer<'a> {
    model: LinearModel,
    examples: &'a [Example],
    config: TrainConfig,
    class_weights: Vec<f64>,
    m: Vec<f64>,
    v: Vec<f64>,
    bias_m: Vec<f64>,
    bias_v: Vec<f64>,
    step: u64,
    epoch: usize,
    order: Vec<usize>,
    rng: ChaCha8Rng,
}

impl<'a> Trainer<'a> {
    pub fn new(model: LinearModel, examples: &'a [Example], config: TrainConfig) -> Result<Trainer<'a>, TrainError> {
        config.check()?;
        if examples.is_empty() {
            return Err(TrainError::EmptyTrainingSet);
        }
        let classes = model.classes;
        if let Some(ex) = examples.iter().find(|e| e.label >= classes) {
            return Err(TrainError::BadLabel { label: ex.label, classes });
        }
        let mut class_weights = vec![1.0; classes];
        if config.class_weighting {
            let mut counts = vec![0usize; classes];
            for ex in examples {
                counts[ex.label] += 1;
            }
            let present = counts.iter().filter(|&&c| c > 0).count() as f64;
            for (w, &c) in class_weights.iter_mut().zip(&counts) {
                if c > 0 {
                    *w = examples.len() as f64 / (present * c as f64);
                }
            }
        }
        let n = model.weights.len();
        Ok(Trainer {
            m: vec![0.0; n],
            v: vec![0.0; n],
            bias_m: vec![0.0; classes],
            bias_v: vec![0.0; classes],
            model,
            examples,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            config,
            class_weights,
            step: 0,
            epoch: 0,
            order: (0..examples.len()).collect(),
        })
    }

    pub fn model(&self) -> &LinearModel {
        &self.model
    }

    pub fn into_model(self) -> LinearModel {
        self.model
    }

    pub fn epochs_done(&self) -> usize {
        self.epoch
    }

    /// One shuffled pass over the data; returns the mean training loss
    /// observed during the pass.
    pub fn run_epoch(&mut self) -> Result<f64, TrainError> {
        self.order.shuffle(&mut self.rng);
        let classes = self.model.classes;
        let mut grad_rows: Vec<f64> = Vec::new();
        let mut slot: HashMap<u32, usize> = HashMap::new();
        let mut touched: Vec<u32> = Vec::new();
        let mut total_loss = 0.0;
        let order = std::mem::take(&mut self.order);
        for batch in order.chunks(self.config.batch_size) {
            slot.clear();
            touched.clear();
            grad_rows.clear();
            let mut bias_grad = vec![0.0; classes];
            let norm: f64 = batch.iter().map(|&i| self.class_weights[self.examples[i].label]).sum();
            for &i in batch {
                let ex = &self.examples[i];
                let cw = self.class_weights[ex.label];
                let probs = softmax(&self.model.logits(&ex.features));
                total_loss += -probs[ex.label].max(f64::MIN_POSITIVE).ln();
                let mut delta = probs;
                delta[ex.label] -= 1.0;
                for d in delta.iter_mut() {
                    *d *= cw / norm;
                }
                for (b, d) in bias_grad.iter_mut().zip(&delta) {
                    *b += d;
                }
                for (f, v) in ex.features.iter() {
                    let s = *slot.entry(f).or_insert_with(|| {
                        touched.push(f);
                        grad_rows.extend(std::iter::repeat(0.0).take(classes));
                        touched.len() - 1
                    });
                    for (g, d) in grad_rows[s * classes..(s + 1) * classes].iter_mut().zip(&delta) {
                        *g += d * v;
                    }
                }
            }
            self.step += 1;
            let c = &self.config;
            let t = self.step as i32;
            let lr_t = c.learning_rate * (1.0 - c.beta2.powi(t)).sqrt() / (1.0 - c.beta1.powi(t));
            let decay = 1.0 - c.learning_rate * c.weight_decay;
            for (s, &f) in touched.iter().enumerate() {
                for k in 0..classes {
                    let idx = f as usize * classes + k;
                    let g = grad_rows[s * classes + k];
                    self.m[idx] = c.beta1 * self.m[idx] + (1.0 - c.beta1) * g;
                    self.v[idx] = c.beta2 * self.v[idx] + (1.0 - c.beta2) * g * g;
                    let w = self.model.weights[idx] * decay;
                    self.model.weights[idx] = w - lr_t * self.m[idx] / (self.v[idx].sqrt() + c.epsilon);
                }
            }
            for k in 0..classes {
                let g = bias_grad[k];
                self.bias_m[k] = c.beta1 * self.bias_m[k] + (1.0 - c.beta1) * g;
                self.bias_v[k] = c.beta2 * self.bias_v[k] + (1.0 - c.beta2) * g * g;
                self.model.bias[k] -= lr_t * self.bias_m[k] / (self.bias_v[k].sqrt() + c.epsilon);
            }
        }
        self.order = order;
        self.epoch += 1;
        let mean = total_loss / self.examples.len() as f64;
        if !mean.is_finite() {
            return Err(TrainError::Diverged);
        }
        Ok(mean)
    }
}

/// Trains `model` for `config.epochs` passes.
pub fn train(model: LinearModel, examples: &[Example], config: &TrainConfig) -> Result<LinearModel, TrainError> {
    let mut trainer = Trainer::new(model, examples, config.clone())?;
    for _ in 0..config.epochs {
        trainer.run_epoch()?;
    }
    Ok(trainer.into_model())
}
