use super::graph::{Graph, Var};
use super::param::{ParamId, ParamStore};
use crate::error::{Error, Result};

/// Compares the analytic gradient of a scalar graph with central differences.
///
/// `build` must construct the same graph for any parameter values. Returns
/// the largest `|analytic - numeric| / max(1, |analytic|)` over the entries
/// of `param`. The store is restored before returning.
pub fn grad_check<F>(store: &mut ParamStore, param: ParamId, h: f64, build: F) -> Result<f64>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    assert!(h > 0.0, "step must be positive");
    let mut g = Graph::new();
    let out = build(&mut g, store)?;
    let grads = g.backward(out)?;
    let n = store.value(param).len();
    let analytic = grads
        .get(param)
        .map(|t| t.data().to_vec())
        .unwrap_or_else(|| vec![0.0; n]);

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let out = build(&mut g, store)?;
        let v = g.value(out);
        v.item().ok_or_else(|| Error::NonScalar(v.shape().to_vec()))
    };

    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate().take(n) {
        let orig = store.value(param).data()[i];
        store.get_mut(param).value.data_mut()[i] = orig + h;
        let plus = eval(store);
        store.get_mut(param).value.data_mut()[i] = orig - h;
        let minus = eval(store);
        store.get_mut(param).value.data_mut()[i] = orig;
        let numeric = (plus? - minus?) / (2.0 * h);
        let err = (a - numeric).abs() / a.abs().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Runs [`grad_check`] on every trainable parameter of the store.
pub fn grad_check_all<F>(store: &mut ParamStore, h: f64, build: F) -> Result<Vec<(String, f64)>>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let ids: Vec<ParamId> = store
        .iter()
        .filter(|(_, _, p)| p.trainable)
        .map(|(id, _, _)| id)
        .collect();
    ids.into_iter()
        .map(|id| {
            let err = grad_check(store, id, h, &build)?;
            Ok((store.name(id).to_string(), err))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffmath::Tensor;

    #[test]
    fn quadratic_is_exact() {
        let mut store = ParamStore::new();
        let id = store.add("theta", Tensor::scalar(3.0), true);
        let err = grad_check(&mut store, id, 1e-5, |g, s| {
            let p = g.param(s, id);
            Ok(g.mul(p, p))
        })
        .unwrap();
        assert!(err < 1e-8, "{err}");
        assert_eq!(store.value(id).data(), &[3.0]);
    }

    #[test]
    fn non_scalar_output_is_an_error() {
        let mut store = ParamStore::new();
        let id = store.add("theta", Tensor::vector(vec![1.0, 2.0]), true);
        let res = grad_check(&mut store, id, 1e-5, |g, s| Ok(g.param(s, id)));
        assert!(matches!(res, Err(Error::NonScalar(_))));
    }
}
