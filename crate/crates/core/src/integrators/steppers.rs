use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Right-hand side `∂u/∂t = F(t, u)` evaluated on a graph. States are `[B × m]`.
pub trait RhsField {
    fn eval(&self, g: &mut Graph, t: f64, u: Var) -> Result<Var>;
}

impl<F> RhsField for F
where
    F: Fn(&mut Graph, f64, Var) -> Result<Var>,
{
    fn eval(&self, g: &mut Graph, t: f64, u: Var) -> Result<Var> {
        self(g, t, u)
    }
}

/// Produces the four stage weights per sample, `[B × 4]`, from the state.
pub trait AlphaProvider {
    fn alpha(&self, g: &mut Graph, u: Var) -> Result<Var>;
}

impl<F> AlphaProvider for F
where
    F: Fn(&mut Graph, Var) -> Result<Var>,
{
    fn alpha(&self, g: &mut Graph, u: Var) -> Result<Var> {
        self(g, u)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct StageSlopes {
    pub k1: Var,
    pub k2: Var,
    pub k3: Var,
    pub k4: Var,
}

pub const RK4_WEIGHTS: [f64; 4] = [1.0 / 6.0, 2.0 / 6.0, 2.0 / 6.0, 1.0 / 6.0];

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(Error::contract(format!("time step must be positive, got {dt}")))
    }
}

fn eval_checked(rhs: &dyn RhsField, g: &mut Graph, t: f64, u: Var) -> Result<Var> {
    let k = rhs.eval(g, t, u)?;
    if g.shape(k) != g.shape(u) {
        return Err(Error::shape("rhs output", g.shape(k), g.shape(u)));
    }
    if !g.value(k).all_finite() {
        return Err(Error::Blowup { step: 0, time: t });
    }
    Ok(k)
}

/// `u + c·k`
fn axpy(g: &mut Graph, u: Var, c: f64, k: Var) -> Result<Var> {
    let s = g.scale(k, c);
    g.add(u, s)
}

fn rk4_stages(rhs: &dyn RhsField, g: &mut Graph, t: f64, u: Var, dt: f64) -> Result<StageSlopes> {
    let k1 = eval_checked(rhs, g, t, u)?;
    let u2 = axpy(g, u, 0.5 * dt, k1)?;
    let k2 = eval_checked(rhs, g, t + 0.5 * dt, u2)?;
    let u3 = axpy(g, u, 0.5 * dt, k2)?;
    let k3 = eval_checked(rhs, g, t + 0.5 * dt, u3)?;
    let u4 = axpy(g, u, dt, k3)?;
    let k4 = eval_checked(rhs, g, t + dt, u4)?;
    Ok(StageSlopes { k1, k2, k3, k4 })
}

/// Classical RK4: `u + dt·(k1 + 2k2 + 2k3 + k4)/6`.
pub fn rk4_step(
    rhs: &dyn RhsField,
    g: &mut Graph,
    t: f64,
    u: Var,
    dt: f64,
) -> Result<(Var, StageSlopes)> {
    check_dt(dt)?;
    let s = rk4_stages(rhs, g, t, u, dt)?;
    let ks = [s.k1, s.k2, s.k3, s.k4];
    let mut acc = g.scale(ks[0], RK4_WEIGHTS[0]);
    for j in 1..4 {
        let term = g.scale(ks[j], RK4_WEIGHTS[j]);
        acc = g.add(acc, term)?;
    }
    let next = axpy(g, u, dt, acc)?;
    Ok((next, s))
}

/// RK4 stages combined with per-sample weights: `u + dt·Σ_j α_j k_j`.
/// Each row of `alpha` (`[B × 4]`) must sum to one within 1e-9.
pub fn rk4_weighted_step(
    rhs: &dyn RhsField,
    g: &mut Graph,
    t: f64,
    u: Var,
    dt: f64,
    alpha: Var,
) -> Result<Var> {
    check_dt(dt)?;
    let (rows, av) = (g.value(u).rows(), g.value(alpha));
    if av.shape().len() != 2 || av.cols() != 4 || av.rows() != rows {
        return Err(Error::shape("rk4_weighted_step alpha", av.shape(), &[rows, 4]));
    }
    for r in 0..rows {
        let s: f64 = av.row(r).iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::contract(format!("alpha row {r} sums to {s}, expected 1")));
        }
    }
    let s = rk4_stages(rhs, g, t, u, dt)?;
    let ks = [s.k1, s.k2, s.k3, s.k4];
    let mut acc: Option<Var> = None;
    for (j, &k) in ks.iter().enumerate() {
        let mut e = [0.0; 4];
        e[j] = 1.0;
        let sel = g.constant(Tensor::matrix(4, 1, e.to_vec())?);
        let col = g.matmul(alpha, sel)?;
        let term = g.mul(col, k)?;
        acc = Some(match acc {
            None => term,
            Some(a) => g.add(a, term)?,
        });
    }
    axpy(g, u, dt, acc.expect("four stages"))
}

/// Explicit midpoint: `u + dt·F(t + dt/2, u + dt/2·F(t, u))`.
pub fn midpoint_step(rhs: &dyn RhsField, g: &mut Graph, t: f64, u: Var, dt: f64) -> Result<Var> {
    check_dt(dt)?;
    let k1 = eval_checked(rhs, g, t, u)?;
    let mid = axpy(g, u, 0.5 * dt, k1)?;
    let k2 = eval_checked(rhs, g, t + 0.5 * dt, mid)?;
    axpy(g, u, dt, k2)
}

pub fn euler_step(rhs: &dyn RhsField, g: &mut Graph, t: f64, u: Var, dt: f64) -> Result<Var> {
    check_dt(dt)?;
    let k1 = eval_checked(rhs, g, t, u)?;
    axpy(g, u, dt, k1)
}

/// Past `(t, u, F(t, u))` values for multistep schemes, newest last.
#[derive(Clone, Debug, Default)]
pub struct StepHistory {
    entries: VecDeque<(f64, Tensor, Tensor)>,
}

impl StepHistory {
    pub const CAPACITY: usize = 2;

    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, t: f64, u: Tensor, f: Tensor) -> Result<()> {
        if let Some((last, _, _)) = self.entries.back() {
            if t <= *last {
                return Err(Error::contract(format!(
                    "history must be time-ordered: {t} after {last}"
                )));
            }
        }
        if self.entries.len() == Self::CAPACITY {
            self.entries.pop_front();
        }
        self.entries.push_back((t, u, f));
        Ok(())
    }

    pub fn latest(&self) -> Option<&(f64, Tensor, Tensor)> {
        self.entries.back()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

/// One PECE step of the AB2 predictor / AM3 corrector pair.
///
/// The history must hold `(t_n − dt, u_{n−1}, F_{n−1})`. On success
/// `(t_n, u_n, F_n)` is pushed so the next call can continue.
pub fn ab2am3_step(
    rhs: &dyn RhsField,
    g: &mut Graph,
    history: &mut StepHistory,
    t_n: f64,
    u_n: Var,
    dt: f64,
) -> Result<Var> {
    check_dt(dt)?;
    let (t_prev, _, f_prev) = history
        .latest()
        .ok_or_else(|| Error::contract("AB2/AM3 needs one previous step; bootstrap first"))?;
    if ((t_n - t_prev) - dt).abs() > 1e-12 * dt.max(1.0) {
        return Err(Error::contract(format!(
            "history spacing {} does not match dt {dt}",
            t_n - t_prev
        )));
    }
    let f_prev = g.constant(f_prev.clone());
    let f_n = eval_checked(rhs, g, t_n, u_n)?;

    // predictor: u + dt (3/2 F_n − 1/2 F_{n−1})
    let a = g.scale(f_n, 1.5);
    let b = g.scale(f_prev, 0.5);
    let ab = g.sub(a, b)?;
    let pred = axpy(g, u_n, dt, ab)?;

    // corrector: u + dt (5/12 F(t+dt, û) + 8/12 F_n − 1/12 F_{n−1})
    let f_pred = eval_checked(rhs, g, t_n + dt, pred)?;
    let c1 = g.scale(f_pred, 5.0 / 12.0);
    let c2 = g.scale(f_n, 8.0 / 12.0);
    let c3 = g.scale(f_prev, 1.0 / 12.0);
    let s = g.add(c1, c2)?;
    let s = g.sub(s, c3)?;
    let next = axpy(g, u_n, dt, s)?;

    let (u_val, f_val) = (g.value(u_n).clone(), g.value(f_n).clone());
    history.push(t_n, u_val, f_val)?;
    Ok(next)
}
