//! Micro precision/recall/F1 over `(level, type, content)` tuples.
//!
//! Tuples are matched as multisets: a tuple that occurs twice in the gold
//! tree can be matched at most twice.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::Serialize;
use thiserror::Error;

use crate::catalog::{CatalogTree, EvalTuple, NodeKind};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("nothing to aggregate")]
    EmptyEvaluation,
}

/// Match counts; precision/recall/F1 derive from these.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
pub struct Counts {
    pub matched: usize,
    pub gold: usize,
    pub pred: usize,
}

impl Counts {
    pub fn add(&mut self, other: Counts) {
        self.matched += other.matched;
        self.gold += other.gold;
        self.pred += other.pred;
    }

    pub fn prf(self) -> Prf {
        let precision = if self.pred == 0 { 0.0 } else { self.matched as f64 / self.pred as f64 };
        let recall = if self.gold == 0 { 0.0 } else { self.matched as f64 / self.gold as f64 };
        let f1 = if precision + recall > 0.0 { 2.0 * precision * recall / (precision + recall) } else { 0.0 };
        Prf {
            precision,
            recall,
            f1,
            matched: self.matched,
            gold_count: self.gold,
            pred_count: self.pred,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    pub gold_count: usize,
    pub pred_count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Evaluation {
    pub overall: Counts,
    pub heading: Counts,
    pub text: Counts,
    pub by_level: BTreeMap<usize, Counts>,
}

/// Size of the multiset intersection of two tuple lists.
pub fn multiset_matches<'a>(gold: impl IntoIterator<Item = &'a EvalTuple>, pred: impl IntoIterator<Item = &'a EvalTuple>) -> usize {
    let mut bag: HashMap<&EvalTuple, usize> = HashMap::new();
    for t in gold {
        *bag.entry(t).or_default() += 1;
    }
    let mut matched = 0;
    for t in pred {
        if let Some(n) = bag.get_mut(t) {
            if *n > 0 {
                *n -= 1;
                matched += 1;
            }
        }
    }
    matched
}

fn counts_where(gold: &[EvalTuple], pred: &[EvalTuple], keep: impl Fn(&EvalTuple) -> bool) -> Counts {
    let g: Vec<&EvalTuple> = gold.iter().filter(|t| keep(t)).collect();
    let p: Vec<&EvalTuple> = pred.iter().filter(|t| keep(t)).collect();
    Counts { matched: multiset_matches(g.iter().copied(), p.iter().copied()), gold: g.len(), pred: p.len() }
}

pub fn evaluate_tuples(gold: &[EvalTuple], pred: &[EvalTuple]) -> Evaluation {
    let mut levels: Vec<usize> = gold.iter().chain(pred).map(|t| t.level).collect();
    levels.sort_unstable();
    levels.dedup();
    Evaluation {
        overall: counts_where(gold, pred, |_| true),
        heading: counts_where(gold, pred, |t| t.kind == NodeKind::Heading),
        text: counts_where(gold, pred, |t| t.kind == NodeKind::Text),
        by_level: levels.into_iter().map(|l| (l, counts_where(gold, pred, |t| t.level == l))).collect(),
    }
}

pub fn evaluate(gold: &CatalogTree, pred: &CatalogTree) -> Evaluation {
    evaluate_tuples(&gold.flatten(), &pred.flatten())
}

/// Micro-aggregation: counts are summed across documents before computing
/// precision and recall.
pub fn aggregate(per_doc: &[Evaluation]) -> Result<Evaluation, MetricsError> {
    if per_doc.is_empty() {
        return Err(MetricsError::EmptyEvaluation);
    }
    let mut total = Evaluation::default();
    for e in per_doc {
        total.overall.add(e.overall);
        total.heading.add(e.heading);
        total.text.add(e.text);
        for (&l, &c) in &e.by_level {
            total.by_level.entry(l).or_default().add(c);
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub overall: Prf,
    pub heading: Prf,
    pub text: Prf,
    pub by_level: BTreeMap<String, Prf>,
}

impl Evaluation {
    pub fn report(&self) -> Report {
        Report {
            overall: self.overall.prf(),
            heading: self.heading.prf(),
            text: self.text.prf(),
            by_level: self.by_level.iter().map(|(l, c)| (l.to_string(), c.prf())).collect(),
        }
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<10} {:>9} {:>9} {:>9} {:>8} {:>8} {:>8}", "subset", "P", "R", "F1", "matched", "gold", "pred");
        let mut row = |name: &str, c: Counts| {
            let p = c.prf();
            let _ = writeln!(
                out,
                "{:<10} {:>9.5} {:>9.5} {:>9.5} {:>8} {:>8} {:>8}",
                name, p.precision, p.recall, p.f1, c.matched, c.gold, c.pred
            );
        };
        row("heading", self.heading);
        row("text", self.text);
        row("overall", self.overall);
        for (l, &c) in &self.by_level {
            row(&format!("level {l}"), c);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::CatalogNode;

    fn tup(level: usize, kind: NodeKind, c: &str) -> EvalTuple {
        EvalTuple { level, kind, content: c.into() }
    }

    #[test]
    fn one_wrong_content_out_of_five() {
        use NodeKind::*;
        let gold = vec![tup(1, Heading, "a"), tup(2, Heading, "b"), tup(3, Text, "c"), tup(2, Heading, "d"), tup(3, Text, "e")];
        let mut pred = gold.clone();
        pred[4].content = "e?".into();
        let e = evaluate_tuples(&gold, &pred);
        assert_eq!(e.overall, Counts { matched: 4, gold: 5, pred: 5 });
        let p = e.overall.prf();
        assert!((p.precision - 0.8).abs() < 1e-12);
        assert!((p.recall - 0.8).abs() < 1e-12);
        assert!((p.f1 - 0.8).abs() < 1e-12);
        assert_eq!(e.heading.matched + e.text.matched, e.overall.matched);
        assert_eq!(e.by_level[&3], Counts { matched: 1, gold: 2, pred: 2 });
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let gold = CatalogTree::from_children(vec![CatalogNode::heading("a", vec![0])]);
        let p = evaluate(&gold, &CatalogTree::new()).overall.prf();
        assert_eq!((p.precision, p.recall, p.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn duplicates_are_matched_as_multisets() {
        use NodeKind::*;
        let gold = vec![tup(1, Heading, "x"), tup(1, Heading, "x")];
        let pred = vec![tup(1, Heading, "x"), tup(1, Heading, "x"), tup(1, Heading, "x")];
        assert_eq!(evaluate_tuples(&gold, &pred).overall, Counts { matched: 2, gold: 2, pred: 3 });
    }

    #[test]
    fn micro_aggregation() {
        let a = Evaluation { overall: Counts { matched: 4, gold: 5, pred: 5 }, ..Default::default() };
        let b = Evaluation { overall: Counts { matched: 0, gold: 5, pred: 0 }, ..Default::default() };
        let p = aggregate(&[a.clone(), b]).unwrap().overall.prf();
        assert!((p.precision - 0.8).abs() < 1e-12);
        assert!((p.recall - 0.4).abs() < 1e-12);
        assert!((p.f1 - 2.0 * 0.8 * 0.4 / 1.2).abs() < 1e-12);
        assert_eq!(aggregate(&[a.clone()]).unwrap(), a);
        assert_eq!(aggregate(&[]).unwrap_err(), MetricsError::EmptyEvaluation);
    }

    #[test]
    fn report_and_table_render() {
        let t = CatalogTree::from_children(vec![CatalogNode::heading("a", vec![0])
            .with_children(vec![CatalogNode::text("b", vec![1])])]);
        let e = evaluate(&t, &t);
        let r = e.report();
        assert_eq!(r.overall.f1, 1.0);
        assert_eq!(r.by_level.keys().cloned().collect::<Vec<_>>(), vec!["1", "2"]);
        let json = serde_json::to_value(&r).unwrap();
        assert!(json["heading"]["precision"].is_number());
        assert!(e.table().contains("overall"));
    }
}
