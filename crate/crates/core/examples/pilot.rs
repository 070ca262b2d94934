//! Trains all three methods on the synthetic split used by the acceptance
//! suite and prints their test scores.
//!
//! cargo run --release --example pilot

use std::time::Instant;

use catree::corpus::{chunk_corpus, generate_synthetic, split, ChunkConfig, GenConfig};
use catree::experiment::{samples, train_method, ExperimentConfig, Method};
use catree::scorer::features::{Featurizer, NumberingPatterns, DEFAULT_DIM};
use catree::scorer::linear::TrainConfig;
use catree::Joiner;

fn main() {
    let seed = 7;
    let started = Instant::now();
    let docs = generate_synthetic(&GenConfig { docs: 200, seed, ..GenConfig::default() }).expect("valid config");
    let chunked: Vec<_> = chunk_corpus(&docs, &ChunkConfig { seed, ..ChunkConfig::default() }, Joiner::None)
        .into_iter()
        .map(|(d, _)| d)
        .collect();
    let parts = split(&chunked, seed).expect("enough documents");
    let (train, dev, test) = (
        samples(&parts.train).unwrap(),
        samples(&parts.dev).unwrap(),
        samples(&parts.test).unwrap(),
    );
    println!("split {}/{}/{}", train.len(), dev.len(), test.len());
    let featurizer = Featurizer::new(DEFAULT_DIM, seed, NumberingPatterns::builtin());
    for method in [Method::Transition, Method::Pipeline, Method::Tagging] {
        let t0 = Instant::now();
        let cfg = ExperimentConfig { method, train: TrainConfig { seed, ..TrainConfig::default() }, ..Default::default() };
        let trained = train_method(&featurizer, &train, &dev, &cfg, |r| {
            println!("  {method:?} epoch {:>2} loss {:.4} dev F1 {:.4}", r.epoch, r.train_loss, r.dev_f1.unwrap_or(0.0));
        })
        .expect("training succeeds");
        let c = trained.models.evaluate(&test, Joiner::None, true).unwrap();
        println!("{method:?}: best epoch {} test F1 {:.4} ({:.1}s)", trained.best_epoch, c.overall.prf().f1, t0.elapsed().as_secs_f64());
        println!("{}", c.table());
        if method == Method::Transition {
            let u = trained.models.evaluate(&test, Joiner::None, false).unwrap();
            println!("Transition unconstrained: test F1 {:.4}", u.overall.prf().f1);
        }
    }
    println!("total {:.1}s", started.elapsed().as_secs_f64());
}
