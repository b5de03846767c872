use super::rollout::{rollout, IntegratorKind};
use super::steppers::RhsField;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Global errors at or below this floor are dominated by round-off and skipped.
pub const ERROR_FLOOR: f64 = 1e-13;

/// An ODE with a known solution at `t_end`.
pub struct KnownSolution<'a> {
    pub rhs: &'a dyn RhsField,
    pub u0: Tensor,
    pub t_end: f64,
    pub exact: Tensor,
}

#[derive(Clone, Debug)]
pub struct OrderEstimate {
    pub order: f64,
    /// `(dt, max-norm global error)` for every step size that was run.
    pub errors: Vec<(f64, f64)>,
    /// Step sizes whose error fell below [`ERROR_FLOOR`].
    pub excluded: Vec<f64>,
}

/// Least-squares slope of `log(error)` against `log(dt)` over a geometric
/// sequence of at least three step sizes.
pub fn estimate_convergence_order(
    kind: IntegratorKind<'_>,
    problem: &KnownSolution<'_>,
    dt_list: &[f64],
) -> Result<OrderEstimate> {
    if dt_list.len() < 3 {
        return Err(Error::contract("order estimation needs at least three step sizes"));
    }
    let ratio = dt_list[1] / dt_list[0];
    for w in dt_list.windows(2) {
        if ((w[1] / w[0]) / ratio - 1.0).abs() > 1e-6 {
            return Err(Error::contract(format!("step sizes {dt_list:?} are not geometric")));
        }
    }
    let mut errors = Vec::new();
    let mut excluded = Vec::new();
    for &dt in dt_list {
        let steps = problem.t_end / dt;
        let n = steps.round();
        if (steps - n).abs() > 1e-9 * steps.max(1.0) || n < 1.0 {
            return Err(Error::contract(format!(
                "dt {dt} does not divide t_end {}",
                problem.t_end
            )));
        }
        let run = rollout(problem.rhs, &problem.u0, 0.0, dt, n as usize, kind)?;
        if run.blowup.is_some() {
            return Err(Error::Blowup {
                step: run.states.len() - 1,
                time: problem.t_end,
            });
        }
        let err = run
            .last()
            .data()
            .iter()
            .zip(problem.exact.data())
            .fold(0.0_f64, |m, (a, b)| m.max((a - b).abs()));
        errors.push((dt, err));
        if err <= ERROR_FLOOR {
            excluded.push(dt);
        }
    }
    let pts: Vec<(f64, f64)> = errors
        .iter()
        .filter(|(_, e)| *e > ERROR_FLOOR)
        .map(|&(dt, e)| (dt.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::contract(format!(
            "only {} step sizes above the error floor",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Ok(OrderEstimate {
        order: sxy / sxx,
        errors,
        excluded,
    })
}
