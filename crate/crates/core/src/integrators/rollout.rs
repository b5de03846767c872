use serde::{Deserialize, Serialize};

use super::steppers::{
    ab2am3_step, euler_step, midpoint_step, rk4_step, rk4_weighted_step, AlphaProvider, RhsField,
    StepHistory,
};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor};

/// States whose max-norm exceeds this are treated as diverged.
pub const BLOWUP_THRESHOLD: f64 = 1e6;

/// Serializable name of a one-step scheme.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Rk4,
    Rk4Weighted,
    Ab2Am3,
    Midpoint,
    Euler,
}

impl Scheme {
    pub fn name(self) -> &'static str {
        match self {
            Scheme::Rk4 => "rk4",
            Scheme::Rk4Weighted => "rk4_weighted",
            Scheme::Ab2Am3 => "ab2am3",
            Scheme::Midpoint => "midpoint",
            Scheme::Euler => "euler",
        }
    }
}

impl std::str::FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rk4" => Scheme::Rk4,
            "rk4_weighted" => Scheme::Rk4Weighted,
            "ab2am3" | "ab" => Scheme::Ab2Am3,
            "midpoint" => Scheme::Midpoint,
            "euler" => Scheme::Euler,
            other => return Err(Error::Config(format!("unknown integrator `{other}`"))),
        })
    }
}

/// A one-step advance rule; the weighted variant carries its α provider.
#[derive(Clone, Copy)]
pub enum IntegratorKind<'a> {
    Rk4,
    Rk4Weighted(&'a dyn AlphaProvider),
    Ab2Am3,
    Midpoint,
    Euler,
}

impl IntegratorKind<'_> {
    pub fn scheme(&self) -> Scheme {
        match self {
            IntegratorKind::Rk4 => Scheme::Rk4,
            IntegratorKind::Rk4Weighted(_) => Scheme::Rk4Weighted,
            IntegratorKind::Ab2Am3 => Scheme::Ab2Am3,
            IntegratorKind::Midpoint => Scheme::Midpoint,
            IntegratorKind::Euler => Scheme::Euler,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlowupInfo {
    /// Index of the last finite frame.
    pub last_valid_step: usize,
    pub time: f64,
}

#[derive(Clone, Debug)]
pub struct Rollout {
    /// Frames `u(t0), u(t0+dt), ...`, each `[B × m]`; truncated on blow-up.
    pub states: Vec<Tensor>,
    pub dt: f64,
    pub t0: f64,
    pub blowup: Option<BlowupInfo>,
}

impl Rollout {
    /// Stacks the frames into `[(steps+1) × B × m]`.
    pub fn trajectory(&self) -> Result<Tensor> {
        Tensor::stack(&self.states)
    }

    pub fn last(&self) -> &Tensor {
        self.states.last().expect("rollout always holds the initial state")
    }
}

fn diverged(u: &Tensor) -> bool {
    u.data().iter().any(|v| !v.is_finite() || v.abs() > BLOWUP_THRESHOLD)
}

/// Advances `u0` for `n_steps` steps of size `dt`. Each step is recorded on a
/// fresh graph and detached, so no gradient survives between steps.
/// AB2/AM3 bootstraps its first step with RK4.
pub fn rollout(
    rhs: &dyn RhsField,
    u0: &Tensor,
    t0: f64,
    dt: f64,
    n_steps: usize,
    kind: IntegratorKind<'_>,
) -> Result<Rollout> {
    if n_steps == 0 {
        return Err(Error::contract("rollout needs at least one step"));
    }
    if !(dt > 0.0) {
        return Err(Error::contract(format!("time step must be positive, got {dt}")));
    }
    let mut states = Vec::with_capacity(n_steps + 1);
    states.push(u0.clone());
    let mut history = StepHistory::new();
    let mut blowup = None;

    for step in 0..n_steps {
        let t = t0 + step as f64 * dt;
        let mut g = Graph::new();
        let u = g.constant(states[step].clone());
        let next = match kind {
            IntegratorKind::Rk4 => rk4_step(rhs, &mut g, t, u, dt).map(|(n, _)| n),
            IntegratorKind::Rk4Weighted(provider) => provider
                .alpha(&mut g, u)
                .and_then(|a| rk4_weighted_step(rhs, &mut g, t, u, dt, a)),
            IntegratorKind::Midpoint => midpoint_step(rhs, &mut g, t, u, dt),
            IntegratorKind::Euler => euler_step(rhs, &mut g, t, u, dt),
            IntegratorKind::Ab2Am3 if step == 0 => {
                rk4_step(rhs, &mut g, t, u, dt).and_then(|(n, slopes)| {
                    let f0 = g.value(slopes.k1).clone();
                    history.push(t, states[0].clone(), f0)?;
                    Ok(n)
                })
            }
            IntegratorKind::Ab2Am3 => ab2am3_step(rhs, &mut g, &mut history, t, u, dt),
        };
        let next = match next {
            Ok(v) => g.value(v).clone(),
            Err(Error::Blowup { .. }) => {
                blowup = Some(BlowupInfo { last_valid_step: step, time: t });
                break;
            }
            Err(e) => return Err(e),
        };
        if diverged(&next) {
            blowup = Some(BlowupInfo { last_valid_step: step, time: t });
            break;
        }
        states.push(next);
    }
    Ok(Rollout {
        states,
        dt,
        t0,
        blowup,
    })
}
