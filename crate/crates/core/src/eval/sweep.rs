use serde::{Deserialize, Serialize};

use crate::diffmath::{argmax, Tensor};
use crate::error::{Error, Result};

/// Test scores with one column per candidate composition.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    scores: Tensor,
    labels: Vec<usize>,
    seen_columns: Vec<bool>,
}

impl ScoreMatrix {
    /// `labels[i]` is the true column of row `i`; `seen_columns[j]` marks
    /// columns whose composition was seen in training.
    pub fn new(scores: Tensor, labels: Vec<usize>, seen_columns: Vec<bool>) -> Result<Self> {
        if scores.shape().len() != 2 || scores.rows() != labels.len() || scores.cols() != seen_columns.len() {
            return Err(Error::ShapeMismatch(format!(
                "scores {:?} with {} labels and {} column flags",
                scores.shape(),
                labels.len(),
                seen_columns.len()
            )));
        }
        if let Some(&index) = labels.iter().find(|&&l| l >= seen_columns.len()) {
            return Err(Error::IndexOutOfRange {
                index,
                len: seen_columns.len(),
            });
        }
        Ok(Self {
            scores,
            labels,
            seen_columns,
        })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R], labels: Vec<usize>, seen_columns: Vec<bool>) -> Result<Self> {
        Self::new(Tensor::from_rows(rows)?, labels, seen_columns)
    }

    pub fn scores(&self) -> &Tensor {
        &self.scores
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn seen_columns(&self) -> &[bool] {
        &self.seen_columns
    }

    pub fn rows(&self) -> usize {
        self.labels.len()
    }

    pub fn is_seen_row(&self, i: usize) -> bool {
        self.seen_columns[self.labels[i]]
    }

    /// Per-row prediction with `bias` added to every unseen column.
    pub fn predict_with_bias(&self, bias: f64) -> Vec<usize> {
        let mut buf = vec![0.0; self.seen_columns.len()];
        self.scores
            .row_iter()
            .map(|row| {
                for ((b, &s), &seen) in buf.iter_mut().zip(row).zip(&self.seen_columns) {
                    *b = if seen { s } else { s + bias };
                }
                argmax(&buf).expect("score rows are nonempty")
            })
            .collect()
    }

    /// `(seen accuracy, unseen accuracy)` as fractions at `bias`.
    pub fn accuracies(&self, bias: f64) -> Result<(f64, f64)> {
        let (seen_rows, unseen_rows) = self.partition_sizes()?;
        let (mut hit_seen, mut hit_unseen) = (0usize, 0usize);
        for (i, p) in self.predict_with_bias(bias).into_iter().enumerate() {
            if p == self.labels[i] {
                if self.is_seen_row(i) {
                    hit_seen += 1;
                } else {
                    hit_unseen += 1;
                }
            }
        }
        Ok((
            hit_seen as f64 / seen_rows as f64,
            hit_unseen as f64 / unseen_rows as f64,
        ))
    }

    fn partition_sizes(&self) -> Result<(usize, usize)> {
        let seen = (0..self.rows()).filter(|&i| self.is_seen_row(i)).count();
        let unseen = self.rows() - seen;
        if seen == 0 {
            return Err(Error::EmptyPartition("seen"));
        }
        if unseen == 0 {
            return Err(Error::EmptyPartition("unseen"));
        }
        Ok((seen, unseen))
    }

    /// `max seen-column score - max unseen-column score` per row.
    pub fn margins(&self) -> Vec<f64> {
        self.scores
            .row_iter()
            .map(|row| {
                let (mut s, mut u) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
                for (&v, &seen) in row.iter().zip(&self.seen_columns) {
                    if seen {
                        s = s.max(v);
                    } else {
                        u = u.max(v);
                    }
                }
                s - u
            })
            .collect()
    }

    /// Bias grid: `-M`, the midpoints between consecutive distinct finite
    /// margins, and `+M`, where `M` exceeds the spread of the finite scores.
    ///
    /// A row's prediction can only flip where the bias equals its margin, so
    /// the grid visits each interval between breakpoints exactly once.
    pub fn bias_grid(&self) -> Vec<f64> {
        let finite = self.scores.data().iter().filter(|v| v.is_finite());
        let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        let big = if lo <= hi { hi - lo + 1.0 } else { 1.0 };
        let mut margins: Vec<f64> = self.margins().into_iter().filter(|m| m.is_finite()).collect();
        margins.sort_by(f64::total_cmp);
        margins.dedup();
        let mut grid = Vec::with_capacity(margins.len() + 1);
        grid.push(-big);
        grid.extend(margins.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
        grid.push(big);
        grid
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub bias: f64,
    /// Fraction of seen-labeled rows predicted correctly.
    pub seen: f64,
    /// Fraction of unseen-labeled rows predicted correctly.
    pub unseen: f64,
}

/// Seen/unseen accuracy at every point of [`ScoreMatrix::bias_grid`], in
/// increasing bias order.
pub fn bias_sweep(m: &ScoreMatrix) -> Result<Vec<CurvePoint>> {
    m.partition_sizes()?;
    m.bias_grid()
        .into_iter()
        .map(|bias| {
            let (seen, unseen) = m.accuracies(bias)?;
            Ok(CurvePoint { bias, seen, unseen })
        })
        .collect()
}

/// Percentages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    #[serde(rename = "S")]
    pub seen: f64,
    #[serde(rename = "U")]
    pub unseen: f64,
    #[serde(rename = "HM")]
    pub hm: f64,
    #[serde(rename = "AUC")]
    pub auc: f64,
}

pub fn harmonic_mean(a: f64, b: f64) -> f64 {
    if a + b == 0.0 {
        0.0
    } else {
        2.0 * a * b / (a + b)
    }
}

/// Best seen, best unseen, best harmonic mean and the area under the
/// unseen-vs-seen curve (trapezoids between consecutive points).
pub fn metrics(curve: &[CurvePoint]) -> Metrics {
    assert!(!curve.is_empty(), "metrics of an empty curve");
    let max = |f: &dyn Fn(&CurvePoint) -> f64| curve.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
    let area: f64 = curve
        .windows(2)
        .map(|w| (w[1].seen - w[0].seen).abs() * (w[0].unseen + w[1].unseen) / 2.0)
        .sum();
    Metrics {
        seen: 100.0 * max(&|p| p.seen),
        unseen: 100.0 * max(&|p| p.unseen),
        hm: 100.0 * max(&|p| harmonic_mean(p.seen, p.unseen)),
        auc: 100.0 * area,
    }
}
