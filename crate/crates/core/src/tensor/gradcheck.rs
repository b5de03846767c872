use super::{Graph, ParamStore, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    /// max over coordinates of |analytic − numeric| / max(1, |numeric|)
    pub max_rel_error: f64,
    /// `(parameter name, flat index)` of the worst coordinate
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Compares backward-mode gradients of `f` against central finite differences
/// over every coordinate of every parameter that requires a gradient.
///
/// `f` must build its scalar output on the supplied fresh graph. Parameter
/// values in `store` are restored before returning; gradients are zeroed.
pub fn grad_check<F>(store: &mut ParamStore, eps: f64, f: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    if !(1e-7..=1e-4).contains(&eps) {
        return Err(Error::contract(format!("grad_check eps {eps} outside [1e-7, 1e-4]")));
    }
    let eval = |store: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let out = f(&mut g, store)?;
        Ok(g.value(out).item())
    };

    store.zero_grad();
    {
        let mut g = Graph::new();
        let out = f(&mut g, store)?;
        let v = g.value(out).item();
        if !v.is_finite() {
            return Err(Error::NonFinite(format!("grad_check objective = {v}")));
        }
        g.backward(out, store)?;
    }

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        if !store.get(id).requires_grad {
            continue;
        }
        let n = store.get(id).value.numel();
        for i in 0..n {
            let orig = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = orig + eps;
            let fp = eval(store);
            store.get_mut(id).value.data_mut()[i] = orig - eps;
            let fm = eval(store);
            store.get_mut(id).value.data_mut()[i] = orig;
            let (fp, fm) = (fp?, fm?);
            if !fp.is_finite() || !fm.is_finite() {
                return Err(Error::NonFinite(format!(
                    "grad_check objective at {}[{i}]",
                    store.get(id).name
                )));
            }
            let numeric = (fp - fm) / (2.0 * eps);
            let analytic = store.get(id).grad.data()[i];
            let rel = (analytic - numeric).abs() / numeric.abs().max(1.0);
            report.coordinates += 1;
            if rel > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(rel);
                report.worst = Some((store.get(id).name.clone(), i));
            }
        }
    }
    store.zero_grad();
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn linear_objective_is_exact() {
        let mut store = ParamStore::new();
        let id = store
            .add("theta", Tensor::from_vec(vec![0.3, -1.2, 2.5, 0.0]))
            .unwrap();
        let c = Tensor::from_vec(vec![1.5, -0.5, 3.0, 2.0]);
        let report = grad_check(&mut store, 1e-4, |g, s| {
            let th = g.param(s, id);
            let cv = g.constant(c.clone());
            let prod = g.mul(th, cv)?;
            Ok(g.sum(prod))
        })
        .unwrap();
        assert_eq!(report.coordinates, 4);
        assert!(report.max_rel_error < 1e-10, "{report:?}");
    }

    #[test]
    fn eps_range_enforced() {
        let mut store = ParamStore::new();
        assert!(grad_check(&mut store, 1e-2, |g, _| Ok(g.constant(Tensor::scalar(0.0)))).is_err());
    }

    #[test]
    fn nonfinite_objective_reported() {
        let mut store = ParamStore::new();
        store.add("w", Tensor::from_vec(vec![1.0])).unwrap();
        let err = grad_check(&mut store, 1e-5, |g, _| Ok(g.constant(Tensor::scalar(f64::NAN))));
        assert!(matches!(err, Err(Error::NonFinite(_))));
    }
}
