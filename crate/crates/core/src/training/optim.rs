use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ParamId, ParamStore, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Adam,
    AdamW,
}

/// Staircase exponential decay: `lr0 · factor^(step div every)`.
pub fn lr_exponential(lr0: f64, factor: f64, every: u64, step: u64) -> f64 {
    assert!(every >= 1, "decay interval must be at least one step");
    lr0 * factor.powi((step / every) as i32)
}

/// Adam / AdamW moments for a fixed set of named parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled decay; only used by AdamW.
    pub weight_decay: f64,
    pub step: u64,
    pub names: Vec<String>,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, weight_decay: f64, store: &ParamStore, ids: &[ParamId]) -> Self {
        let (mut names, mut m, mut v) = (Vec::new(), Vec::new(), Vec::new());
        for &id in ids {
            let p = store.get(id);
            names.push(p.name.clone());
            m.push(Tensor::zeros(p.value.shape()));
            v.push(Tensor::zeros(p.value.shape()));
        }
        Self {
            kind,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: if kind == OptimizerKind::AdamW { weight_decay } else { 0.0 },
            step: 0,
            names,
            m,
            v,
        }
    }

    /// One bias-corrected update of every tracked parameter from its
    /// accumulated gradient. A non-finite gradient aborts before any
    /// parameter changes.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        let ids = self.resolve(store)?;
        for (&id, name) in ids.iter().zip(&self.names) {
            if !store.get(id).grad.all_finite() {
                return Err(Error::NonFinite(format!("gradient of `{name}`")));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powi(t);
        let c2 = 1.0 - b2.powi(t);
        let decoupled = self.kind == OptimizerKind::AdamW && self.weight_decay != 0.0;
        for (k, &id) in ids.iter().enumerate() {
            let p = store.get_mut(id);
            let grad = p.grad.data().to_vec();
            let (m, v) = (self.m[k].data_mut(), self.v[k].data_mut());
            for (i, th) in p.value.data_mut().iter_mut().enumerate() {
                let gi = grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * gi;
                v[i] = b2 * v[i] + (1.0 - b2) * gi * gi;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                let mut upd = mh / (vh.sqrt() + self.eps);
                if decoupled {
                    upd += self.weight_decay * *th;
                }
                *th -= lr * upd;
            }
        }
        Ok(())
    }

    fn resolve(&self, store: &ParamStore) -> Result<Vec<ParamId>> {
        self.names
            .iter()
            .zip(&self.m)
            .map(|(n, m)| {
                let id = store
                    .id(n)
                    .ok_or_else(|| Error::Checkpoint(format!("optimizer tracks unknown parameter `{n}`")))?;
                if store.get(id).value.shape() != m.shape() {
                    return Err(Error::Checkpoint(format!(
                        "optimizer moment for `{n}` has shape {:?}, parameter has {:?}",
                        m.shape(),
                        store.get(id).value.shape()
                    )));
                }
                Ok(id)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_param(v: f64) -> (ParamStore, ParamId) {
        let mut s = ParamStore::new();
        let id = s.add("w", Tensor::from_vec(vec![v])).unwrap();
        (s, id)
    }

    #[test]
    fn staircase_schedule() {
        assert_eq!(lr_exponential(1e-3, 0.95, 5000, 0), 1e-3);
        assert!((lr_exponential(1e-3, 0.95, 5000, 5000) - 9.5e-4).abs() < 1e-18);
        assert!((lr_exponential(1e-3, 0.95, 5000, 12_500) - 1e-3 * 0.95 * 0.95).abs() < 1e-18);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let (mut s, id) = one_param(0.3);
        let mut opt = OptimizerState::new(OptimizerKind::Adam, 0.0, &s, &[id]);
        opt.step(&mut s, 1e-3).unwrap();
        assert_eq!(s.get(id).value.item(), 0.3);
    }

    #[test]
    fn first_adam_step_has_unit_ratio() {
        let (mut s, id) = one_param(0.0);
        s.get_mut(id).grad = Tensor::from_vec(vec![1.0]);
        let mut opt = OptimizerState::new(OptimizerKind::Adam, 0.0, &s, &[id]);
        opt.step(&mut s, 1e-3).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = −lr / (1 + ε)
        assert!((s.get(id).value.item() + 1e-3 / (1.0 + 1e-8)).abs() < 1e-18);
    }

    #[test]
    fn adamw_adds_decoupled_decay() {
        let (mut a, ia) = one_param(2.0);
        let (mut b, ib) = one_param(2.0);
        for (s, id) in [(&mut a, ia), (&mut b, ib)] {
            s.get_mut(id).grad = Tensor::from_vec(vec![0.5]);
        }
        let mut adam = OptimizerState::new(OptimizerKind::Adam, 1e-4, &a, &[ia]);
        let mut adamw = OptimizerState::new(OptimizerKind::AdamW, 1e-4, &b, &[ib]);
        adam.step(&mut a, 1e-3).unwrap();
        adamw.step(&mut b, 1e-3).unwrap();
        let diff = b.get(ib).value.item() - a.get(ia).value.item();
        // a few ulps at the parameter magnitude
        assert!((diff + 1e-3 * 1e-4 * 2.0).abs() < 2e-15);
    }

    #[test]
    fn zero_learning_rate_freezes() {
        let (mut s, id) = one_param(1.25);
        s.get_mut(id).grad = Tensor::from_vec(vec![3.0]);
        let mut opt = OptimizerState::new(OptimizerKind::AdamW, 1e-2, &s, &[id]);
        for _ in 0..5 {
            opt.step(&mut s, 0.0).unwrap();
        }
        assert_eq!(s.get(id).value.item(), 1.25);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let (mut s, id) = one_param(1.0);
        s.get_mut(id).grad = Tensor::from_vec(vec![f64::NAN]);
        let mut opt = OptimizerState::new(OptimizerKind::Adam, 0.0, &s, &[id]);
        let err = opt.step(&mut s, 1e-3).unwrap_err();
        assert!(err.to_string().contains("`w`"));
        assert_eq!(s.get(id).value.item(), 1.0);
        assert_eq!(opt.step, 0);
    }
}
