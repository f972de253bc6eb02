//! Classification metrics and the paired significance test.
//!
//! Any ratio whose denominator is zero is reported as 0. Macro-F1 averages
//! over every class, including classes with no gold support.

use serde::Serialize;
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Counts with gold labels on rows and predictions on columns.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ConfusionMatrix {
    n: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        ConfusionMatrix {
            n: classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn from_labels(gold: &[usize], pred: &[usize], classes: usize) -> Result<Self> {
        if gold.len() != pred.len() {
            return Err(Error::Rejected(format!(
                "{} gold labels but {} predictions",
                gold.len(),
                pred.len()
            )));
        }
        let mut m = ConfusionMatrix::new(classes);
        for (&g, &p) in gold.iter().zip(pred) {
            if g >= classes || p >= classes {
                return Err(Error::Rejected(format!(
                    "label pair ({g}, {p}) out of range for {classes} classes"
                )));
            }
            m.counts[g * classes + p] += 1;
        }
        Ok(m)
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Rejected("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            n,
            counts: rows.concat(),
        })
    }

    pub fn classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, gold: usize, pred: usize) -> u64 {
        self.counts[gold * self.n + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n).map(|c| self.get(c, c)).sum()
    }

    pub fn report(&self) -> MetricsReport {
        let classes: Vec<ClassMetrics> = (0..self.n)
            .map(|c| {
                let tp = self.get(c, c);
                let support: u64 = (0..self.n).map(|p| self.get(c, p)).sum();
                let predicted: u64 = (0..self.n).map(|g| self.get(g, c)).sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                let f1 = if precision + recall == 0.0 {
                    0.0
                } else {
                    2.0 * precision * recall / (precision + recall)
                };
                ClassMetrics {
                    precision,
                    recall,
                    f1,
                    support,
                }
            })
            .collect();
        let empty = classes.iter().filter(|c| c.support == 0).count();
        if empty > 0 && self.total() > 0 {
            log::warn!("{empty} class(es) have no gold support; macro-F1 still averages over them");
        }
        let macro_f1 = if classes.is_empty() {
            0.0
        } else {
            classes.iter().map(|c| c.f1).sum::<f64>() / classes.len() as f64
        };
        MetricsReport {
            accuracy: ratio(self.trace(), self.total()),
            macro_f1,
            total: self.total(),
            classes,
        }
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub macro_f1: f64,
    pub total: u64,
}

impl MetricsReport {
    /// Fixed-width table: one row per class, then accuracy and macro-F1.
    /// Values are percentages with two decimals.
    pub fn to_table(&self, names: &[String]) -> String {
        let width = names.iter().map(String::len).max().unwrap_or(5).max(9);
        let mut s = format!(
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>8}\n",
            "Relation", "Precision", "Recall", "F1", "Support"
        );
        for (i, c) in self.classes.iter().enumerate() {
            let name = names.get(i).map_or_else(|| i.to_string(), Clone::clone);
            s.push_str(&format!(
                "{:<width$}  {:>9.2}  {:>9.2}  {:>9.2}  {:>8}\n",
                name,
                100.0 * c.precision,
                100.0 * c.recall,
                100.0 * c.f1,
                c.support
            ));
        }
        s.push_str(&format!("{:<width$}  {:>9.2}\n", "Accuracy", 100.0 * self.accuracy));
        s.push_str(&format!("{:<width$}  {:>9.2}\n", "Macro-F1", 100.0 * self.macro_f1));
        s
    }

    /// JSON object with per-class entries keyed by label name.
    pub fn to_json(&self, names: &[String]) -> serde_json::Value {
        let classes: serde_json::Map<String, serde_json::Value> = self
            .classes
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let name = names.get(i).map_or_else(|| i.to_string(), Clone::clone);
                (name, serde_json::to_value(c).expect("plain struct"))
            })
            .collect();
        serde_json::json!({
            "accuracy": self.accuracy,
            "macro_f1": self.macro_f1,
            "total": self.total,
            "classes": classes,
        })
    }
}

/// Per-class P/R/F1, accuracy and macro-F1 for label index sequences.
pub fn score(gold: &[usize], pred: &[usize], classes: usize) -> Result<MetricsReport> {
    Ok(ConfusionMatrix::from_labels(gold, pred, classes)?.report())
}

/// One-vs-other view: `positive` becomes 1, every other class 0.
pub fn binarize(gold: &[usize], pred: &[usize], positive: usize) -> (Vec<usize>, Vec<usize>) {
    let f = |v: &[usize]| v.iter().map(|&x| usize::from(x == positive)).collect();
    (f(gold), f(pred))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TTest {
    pub t: f64,
    /// One-tailed p-value for the hypothesis `mean(a - b) > 0`.
    pub p: f64,
    pub degrees_of_freedom: usize,
    /// Set when every difference is the same nonzero value.
    pub degenerate: bool,
}

/// Paired t-test on `a - b` with a one-tailed p-value from Student's t with
/// `n - 1` degrees of freedom.
///
/// If all differences are zero the result is `t = 0, p = 0.5`. If they are
/// all equal and nonzero the variance vanishes. The test is flagged
/// degenerate, `t` becomes ±∞ and `p` is 0 (positive mean) or 1 (negative
/// mean).
pub fn one_tailed_paired_ttest(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::Rejected(format!(
            "paired samples differ in length ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Rejected("a paired t-test needs at least 2 pairs".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean = d.iter().sum::<f64>() / n as f64;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let dof = n - 1;
    let spread = d.iter().map(|x| (x - d[0]).abs()).fold(0.0, f64::max);
    if spread == 0.0 {
        if mean == 0.0 {
            return Ok(TTest { t: 0.0, p: 0.5, degrees_of_freedom: dof, degenerate: false });
        }
        return Ok(TTest {
            t: mean.signum() * f64::INFINITY,
            p: if mean > 0.0 { 0.0 } else { 1.0 },
            degrees_of_freedom: dof,
            degenerate: true,
        });
    }
    let t = mean / (var.sqrt() / (n as f64).sqrt());
    let dist = StudentsT::new(0.0, 1.0, dof as f64).expect("dof >= 1");
    Ok(TTest {
        t,
        p: 1.0 - dist.cdf(t),
        degrees_of_freedom: dof,
        degenerate: false,
    })
}
