//! Oracles shared by the integration tests. Each one recomputes a library
//! result by a different, deliberately naive route.

#![allow(dead_code)]

use lpr::dataset::{Dataset, Pair};
use lpr::diffmath::Tensor;
use lpr::eval::ScoreMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Index of the first maximum; the library breaks ties the same way.
pub fn first_max(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Seen and unseen accuracy at one bias, by direct argmax.
pub fn accuracy_at(rows: &[Vec<f64>], labels: &[usize], seen: &[bool], bias: f64) -> (f64, f64) {
    let (mut hs, mut ns, mut hu, mut nu) = (0usize, 0usize, 0usize, 0usize);
    for (row, &label) in rows.iter().zip(labels) {
        let shifted: Vec<f64> = row.iter().zip(seen).map(|(&s, &k)| if k { s } else { s + bias }).collect();
        let hit = (first_max(&shifted) == label) as usize;
        if seen[label] {
            ns += 1;
            hs += hit;
        } else {
            nu += 1;
            hu += hit;
        }
    }
    (hs as f64 / ns as f64, hu as f64 / nu as f64)
}

/// Every bias at which some seen column can tie some unseen column of the
/// same row, sorted and deduplicated.
pub fn all_breakpoints(rows: &[Vec<f64>], seen: &[bool]) -> Vec<f64> {
    let mut b = Vec::new();
    for row in rows {
        for (j, &sj) in row.iter().enumerate() {
            for (k, &sk) in row.iter().enumerate() {
                if seen[j] && !seen[k] && (sj - sk).is_finite() {
                    b.push(sj - sk);
                }
            }
        }
    }
    b.sort_by(f64::total_cmp);
    b.dedup();
    b
}

/// Accuracy pairs on every interval between breakpoints, in increasing bias
/// order, with consecutive repeats removed.
pub fn brute_force_curve(rows: &[Vec<f64>], labels: &[usize], seen: &[bool]) -> Vec<(f64, f64)> {
    let b = all_breakpoints(rows, seen);
    let mut probes = Vec::new();
    match (b.first(), b.last()) {
        (Some(&lo), Some(&hi)) => {
            probes.push(lo - 1.0);
            probes.extend(b.windows(2).map(|w| (w[0] + w[1]) / 2.0));
            probes.push(hi + 1.0);
        }
        _ => probes.push(0.0),
    }
    collapse(probes.into_iter().map(|p| accuracy_at(rows, labels, seen, p)).collect())
}

pub fn collapse(points: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    let mut out: Vec<(f64, f64)> = Vec::new();
    for p in points {
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    out
}

/// Midpoint-rule integral of the piecewise-linear unseen-vs-seen curve.
///
/// The cell count is a multiple of 2520, so every accuracy with a
/// denominator up to 10 falls on a cell boundary and the rule is exact up
/// to rounding for curves from at most ten rows per partition.
pub fn riemann_auc(curve: &[(f64, f64)], cells: usize) -> f64 {
    let h = 1.0 / cells as f64;
    let mut total = 0.0;
    for w in curve.windows(2) {
        let ((s0, u0), (s1, u1)) = (w[0], w[1]);
        if s0 == s1 {
            continue;
        }
        let (lo, hi) = (s0.min(s1), s0.max(s1));
        let first = (lo * cells as f64).floor() as usize;
        let last = ((hi * cells as f64).ceil() as usize).min(cells);
        for c in first..last {
            let x = (c as f64 + 0.5) * h;
            if x > lo && x < hi {
                let t = (x - s0) / (s1 - s0);
                total += h * (u0 + t * (u1 - u0));
            }
        }
    }
    total
}

/// Random score matrix with at most `max_rows` rows and `max_cols` columns,
/// at least one seen and one unseen column and row. Scores are multiples of
/// 1/8 so that ties and coinciding margins are common; with probability
/// `p_neg_inf` an unseen entry is -inf, as for a closed-world mask.
pub fn random_scores(rng: &mut ChaCha8Rng, max_rows: usize, max_cols: usize, p_neg_inf: f64) -> (Vec<Vec<f64>>, Vec<usize>, Vec<bool>) {
    let cols = rng.random_range(2..=max_cols);
    let mut seen: Vec<bool> = (0..cols).map(|_| rng.random_bool(0.5)).collect();
    seen[0] = true;
    seen[cols - 1] = false;
    let seen_cols: Vec<usize> = (0..cols).filter(|&j| seen[j]).collect();
    let unseen_cols: Vec<usize> = (0..cols).filter(|&j| !seen[j]).collect();
    let rows = rng.random_range(2..=max_rows);
    let labels: Vec<usize> = (0..rows)
        .map(|i| match i {
            0 => seen_cols[rng.random_range(0..seen_cols.len())],
            1 => unseen_cols[rng.random_range(0..unseen_cols.len())],
            _ => rng.random_range(0..cols),
        })
        .collect();
    let scores = (0..rows)
        .map(|_| {
            (0..cols)
                .map(|j| {
                    if !seen[j] && rng.random_bool(p_neg_inf) {
                        f64::NEG_INFINITY
                    } else {
                        rng.random_range(0..=8) as f64 / 8.0
                    }
                })
                .collect()
        })
        .collect();
    (scores, labels, seen)
}

pub fn score_matrix(rows: &[Vec<f64>], labels: &[usize], seen: &[bool]) -> ScoreMatrix {
    ScoreMatrix::new(Tensor::from_rows(rows).unwrap(), labels.to_vec(), seen.to_vec()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Nearest row of `protos` to `x` by dot product.
pub fn nearest(protos: &Tensor, x: &[f64]) -> usize {
    let sims: Vec<f64> = protos.row_iter().map(|r| r.iter().zip(x).map(|(a, b)| a * b).sum()).collect();
    first_max(&sims)
}

/// Composition prototype rows of `pairs`, looked up by grid position.
pub fn composition_rows(ds: &Dataset, pairs: &[Pair]) -> Tensor {
    let rows: Vec<usize> = pairs.iter().map(|p| p.state * ds.space.num_objects() + p.object).collect();
    ds.bank.compositions.select_rows(&rows)
}
