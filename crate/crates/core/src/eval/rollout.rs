use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrators::{rollout, IntegratorKind, Rollout, Scheme, BLOWUP_THRESHOLD};
use crate::tensor::{Graph, ParamStore, Tensor, Var};
use crate::training::{Model, Regime};

/// How a trained model is marched forward at inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "scheme")]
pub enum InferenceKind {
    /// The network is the right-hand side of a one-step scheme.
    Integrator(Scheme),
    /// State-to-state recursion at the training step.
    ArDirect,
    /// Direct query of the space-time field.
    FrQuery,
}

impl InferenceKind {
    /// TI uses AB2/AM3, TI(L) its learned-weight RK4.
    pub fn default_for(regime: Regime) -> Self {
        match regime {
            Regime::Fr => InferenceKind::FrQuery,
            Regime::Ar => InferenceKind::ArDirect,
            Regime::TiRk4 => InferenceKind::Integrator(Scheme::Ab2Am3),
            Regime::TiLearnable => InferenceKind::Integrator(Scheme::Rk4Weighted),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            InferenceKind::Integrator(s) => s.name(),
            InferenceKind::ArDirect => "ar_direct",
            InferenceKind::FrQuery => "fr_query",
        }
    }

    fn check(self, model: &Model, dt_eval: f64) -> Result<()> {
        let ok = match self {
            InferenceKind::Integrator(Scheme::Rk4Weighted) => model.alpha.is_some(),
            InferenceKind::Integrator(_) => model.regime.is_ti(),
            InferenceKind::ArDirect => model.regime == Regime::Ar,
            InferenceKind::FrQuery => model.regime == Regime::Fr,
        };
        if !ok {
            return Err(Error::Config(format!(
                "inference `{}` does not apply to a {} model",
                self.name(),
                model.regime
            )));
        }
        if self == InferenceKind::ArDirect && (dt_eval - model.dt_train).abs() > 1e-9 * model.dt_train {
            return Err(Error::Config(format!(
                "AR_DIRECT is tied to its training step {}; got dt_eval = {dt_eval}",
                model.dt_train
            )));
        }
        Ok(())
    }
}

impl std::fmt::Display for InferenceKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug)]
pub struct RolloutResult {
    /// Frames at `k·dt_eval`, each `[B × width]`. A sample that blew up
    /// repeats its last finite state from then on.
    pub states: Vec<Tensor>,
    pub times: Vec<f64>,
    pub kind: InferenceKind,
    pub dt_eval: f64,
    /// Per sample, the index of the last finite frame if the rollout blew up.
    pub blowup: Vec<Option<usize>>,
}

impl RolloutResult {
    pub fn n_blown_up(&self) -> usize {
        self.blowup.iter().filter(|b| b.is_some()).count()
    }
}

/// Number of steps of size `dt` that reach `t_final`.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(t_final > 0.0) {
        return Err(Error::Config(format!("need positive dt and horizon, got {dt} and {t_final}")));
    }
    let n = t_final / dt;
    let r = n.round();
    if r < 1.0 || (n - r).abs() > 1e-6 * r {
        return Err(Error::Config(format!("dt_eval = {dt} does not divide the horizon {t_final}")));
    }
    Ok(r as usize)
}

/// Marches the `[B × width]` initial states of `ics` to `t_final`.
pub fn rollout_model(
    model: &Model,
    store: &ParamStore,
    ics: &Tensor,
    kind: InferenceKind,
    dt_eval: f64,
    t_final: f64,
) -> Result<RolloutResult> {
    kind.check(model, dt_eval)?;
    if ics.shape().len() != 2 || ics.cols() != model.state_width() {
        return Err(Error::shape("rollout initial states", ics.shape(), &[model.state_width()]));
    }
    let n_steps = step_count(t_final, dt_eval)?;
    let times: Vec<f64> = (0..=n_steps).map(|k| k as f64 * dt_eval).collect();
    let b = ics.rows();

    if kind == InferenceKind::FrQuery {
        let states = fr_query(model, store, ics, &times)?;
        return Ok(RolloutResult {
            states,
            times,
            kind,
            dt_eval,
            blowup: vec![None; b],
        });
    }

    let trunk = model.net.trunk_eval(store, &model.net.sensors)?;
    let march = |u0: &Tensor| -> Result<Rollout> {
        match kind {
            InferenceKind::ArDirect => ar_recursion(model, store, &trunk, u0, dt_eval, n_steps),
            InferenceKind::Integrator(scheme) => {
                let rhs = |g: &mut Graph, _t: f64, u: Var| model.net.bind_with_trunk(g, store, &trunk)?.apply(g, u);
                let alpha = |g: &mut Graph, u: Var| match &model.alpha {
                    Some(a) => a.forward(g, store, u),
                    None => Err(Error::contract("weighted RK4 without an α network")),
                };
                let integ = match scheme {
                    Scheme::Rk4 => IntegratorKind::Rk4,
                    Scheme::Rk4Weighted => IntegratorKind::Rk4Weighted(&alpha),
                    Scheme::Ab2Am3 => IntegratorKind::Ab2Am3,
                    Scheme::Midpoint => IntegratorKind::Midpoint,
                    Scheme::Euler => IntegratorKind::Euler,
                };
                rollout(&rhs, u0, 0.0, dt_eval, n_steps, integ)
            }
            InferenceKind::FrQuery => unreachable!(),
        }
    };

    let batched = march(ics)?;
    if batched.blowup.is_none() {
        return Ok(RolloutResult {
            states: batched.states,
            times,
            kind,
            dt_eval,
            blowup: vec![None; b],
        });
    }

    // One sample blowing up stops the batch, so redo each sample alone.
    let singles: Vec<Rollout> = (0..b)
        .into_par_iter()
        .map(|i| march(&ics.select_rows(&[i])))
        .collect::<Result<_>>()?;
    let width = ics.cols();
    let mut states = Vec::with_capacity(n_steps + 1);
    for k in 0..=n_steps {
        let mut data = Vec::with_capacity(b * width);
        for r in &singles {
            data.extend_from_slice(r.states[k.min(r.states.len() - 1)].data());
        }
        states.push(Tensor::matrix(b, width, data)?);
    }
    let blowup = singles
        .iter()
        .map(|r| r.blowup.map(|_| r.states.len() - 1))
        .collect();
    Ok(RolloutResult {
        states,
        times,
        kind,
        dt_eval,
        blowup,
    })
}

fn ar_recursion(
    model: &Model,
    store: &ParamStore,
    trunk: &Tensor,
    u0: &Tensor,
    dt: f64,
    n_steps: usize,
) -> Result<Rollout> {
    let mut states = vec![u0.clone()];
    let mut blowup = None;
    for step in 0..n_steps {
        let mut g = Graph::new();
        let bound = model.net.bind_with_trunk(&mut g, store, trunk)?;
        let u = g.constant(states[step].clone());
        let next = bound.apply(&mut g, u)?;
        let next = g.value(next).clone();
        if next.data().iter().any(|v| !v.is_finite() || v.abs() > BLOWUP_THRESHOLD) {
            blowup = Some(crate::integrators::BlowupInfo {
                last_valid_step: step,
                time: step as f64 * dt,
            });
            break;
        }
        states.push(next);
    }
    Ok(Rollout {
        states,
        dt,
        t0: 0.0,
        blowup,
    })
}

fn fr_query(model: &Model, store: &ParamStore, ics: &Tensor, times: &[f64]) -> Result<Vec<Tensor>> {
    let mut states = Vec::with_capacity(times.len());
    states.push(ics.clone());
    for &t in &times[1..] {
        let queries = model.spacetime_queries(&[t])?;
        let trunk = model.net.trunk_eval(store, &queries)?;
        let mut g = Graph::new();
        let bound = model.net.bind_with_trunk(&mut g, store, &trunk)?;
        let u = g.constant(ics.clone());
        let out = bound.apply(&mut g, u)?;
        states.push(g.value(out).clone());
    }
    Ok(states)
}
