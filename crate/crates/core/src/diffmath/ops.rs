//! Non-differentiable reference kernels shared by the graph and by inference code.

use super::tensor::{dot, norm, Tensor};
use crate::error::{Error, Result};

/// Row norms below this are rejected as degenerate.
pub const MIN_NORM: f64 = 1e-12;

/// Numerically stable softmax (max-subtraction).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let mut out = logits.to_vec();
    softmax_in_place(&mut out);
    Ok(out)
}

pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

/// `log(sum(exp(row)))`, stabilised by the row maximum.
pub fn log_sum_exp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let lse = log_sum_exp(logits);
    Ok(logits.iter().map(|v| v - lse).collect())
}

/// `-log softmax(logits)[target]`, computed through the fused log-softmax.
pub fn cross_entropy(logits: &[f64], target: usize) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    if target >= logits.len() {
        return Err(Error::IndexOutOfRange {
            index: target,
            len: logits.len(),
        });
    }
    Ok(log_sum_exp(logits) - logits[target])
}

/// Unit-normalizes a vector, rejecting zero-norm input.
pub fn l2_normalize(v: &[f64]) -> Result<Vec<f64>> {
    let n = norm(v);
    if !(n > MIN_NORM) {
        return Err(Error::DegenerateFeature);
    }
    Ok(v.iter().map(|x| x / n).collect())
}

/// Pairwise cosine similarity between the rows of `x` (m×d) and `y` (n×d).
pub fn cosine_sim_matrix(x: &Tensor, y: &Tensor) -> Result<Tensor> {
    if x.cols() != y.cols() {
        return Err(Error::ShapeMismatch(format!(
            "cosine similarity between widths {} and {}",
            x.cols(),
            y.cols()
        )));
    }
    let xn = x
        .row_iter()
        .map(l2_normalize)
        .collect::<Result<Vec<_>>>()?;
    let yn = y
        .row_iter()
        .map(l2_normalize)
        .collect::<Result<Vec<_>>>()?;
    let mut data = Vec::with_capacity(xn.len() * yn.len());
    for a in &xn {
        for b in &yn {
            data.push(dot(a, b).clamp(-1.0, 1.0));
        }
    }
    Tensor::matrix(xn.len(), yn.len(), data)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in values.iter().enumerate() {
        match best {
            Some((_, b)) if !(v > b) => {}
            _ => best = Some((i, v)),
        }
    }
    best.map(|(i, _)| i)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_uniform_logits() {
        let p = softmax(&[0.0, 0.0, 0.0]).unwrap();
        for v in p {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_reference_values() {
        let p = softmax(&[1.0, 2.0, 3.0]).unwrap();
        let expected = [0.09003057, 0.24472847, 0.66524096];
        for (a, b) in p.iter().zip(expected) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn softmax_shift_invariant_and_large_logits_stable() {
        let a = softmax(&[1.0, -2.0, 0.5]).unwrap();
        let b = softmax(&[1001.0, 998.0, 1000.5]).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn softmax_rejects_empty() {
        assert!(matches!(softmax(&[]), Err(Error::EmptyDistribution)));
    }

    #[test]
    fn cross_entropy_values() {
        let k4 = cross_entropy(&[0.3; 4], 2).unwrap();
        assert!((k4 - 4f64.ln()).abs() < 1e-12);
        assert!((k4 - 1.3862944).abs() < 1e-7);
        assert!(cross_entropy(&[1000.0, 0.0, 0.0], 0).unwrap() < 1e-300);
        let ce = cross_entropy(&[1.0, 2.0, 3.0], 1).unwrap();
        assert!((ce - 1.40760596).abs() < 1e-8);
    }

    #[test]
    fn cross_entropy_target_out_of_range() {
        assert!(matches!(
            cross_entropy(&[1.0, 2.0], 2),
            Err(Error::IndexOutOfRange { index: 2, len: 2 })
        ));
    }

    #[test]
    fn cosine_examples() {
        let a = Tensor::from_rows(&[[3.0, 4.0]]).unwrap();
        let b = Tensor::from_rows(&[[4.0, 3.0], [3.0, 4.0], [-4.0, 3.0]]).unwrap();
        let c = cosine_sim_matrix(&a, &b).unwrap();
        assert!((c.data()[0] - 0.96).abs() < 1e-12);
        assert!((c.data()[1] - 1.0).abs() < 1e-12);
        assert!(c.data()[2].abs() < 1e-12);
        let e = Tensor::from_rows(&[[1.0, 0.0]]).unwrap();
        let f = Tensor::from_rows(&[[0.0, 1.0]]).unwrap();
        assert_eq!(cosine_sim_matrix(&e, &f).unwrap().data()[0], 0.0);
    }

    #[test]
    fn cosine_rejects_zero_rows() {
        let a = Tensor::from_rows(&[[0.0, 0.0]]).unwrap();
        let b = Tensor::from_rows(&[[1.0, 0.0]]).unwrap();
        assert!(matches!(
            cosine_sim_matrix(&a, &b),
            Err(Error::DegenerateFeature)
        ));
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.0, 1.0, 3.0, 0.5, 2.0, 3.0]), Some(2));
        assert_eq!(argmax(&[]), None);
    }
}
