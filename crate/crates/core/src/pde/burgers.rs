use super::grid::Grid1D;
use super::spectral::{Spectral1D, C64};
use super::trajectory::{march, ratio, Trajectory};
use crate::error::{Error, Result};

pub const BURGERS_NU: f64 = 0.01;

/// Viscous Burgers `u_t + u u_x = ν u_xx` on a periodic grid.
///
/// Pseudo-spectral in space with the flux `−½(u²)_x` dealiased by the 2/3
/// rule; diffusion is absorbed into an integrating factor and the rest is
/// advanced with classical RK4.
pub fn solve_burgers1d(
    u0: &[f64],
    nu: f64,
    grid: &Grid1D,
    dt_solver: f64,
    t_final: f64,
    dt_save: f64,
) -> Result<Trajectory> {
    if !grid.periodic {
        return Err(Error::Config("Burgers solver needs a periodic grid".into()));
    }
    if u0.len() != grid.n_points {
        return Err(Error::shape("solve_burgers1d", &[u0.len()], &[grid.n_points]));
    }
    if !(nu >= 0.0) {
        return Err(Error::Config(format!("viscosity must be non-negative, got {nu}")));
    }
    let substeps = ratio(dt_save, dt_solver, "Burgers save interval")?;
    let n_saves = ratio(t_final, dt_save, "Burgers horizon")?;
    let h = dt_save / substeps as f64;

    let sp = Spectral1D::new(grid.n_unique(), grid.length);
    let e: Vec<f64> = sp.k.iter().map(|k| (-nu * k * k * h).exp()).collect();
    let e2: Vec<f64> = sp.k.iter().map(|k| (-nu * k * k * h * 0.5).exp()).collect();
    let nonlinear = |v: &[C64]| sp.flux_derivative(v, -0.5);
    let n = sp.n;

    let v0 = sp.forward(grid.unique(u0));
    march(
        v0,
        h,
        substeps,
        n_saves,
        dt_save,
        |v| {
            let a: Vec<C64> = nonlinear(v).into_iter().map(|x| x * h).collect();
            let s: Vec<C64> = (0..n).map(|j| e2[j] * (v[j] + 0.5 * a[j])).collect();
            let b: Vec<C64> = nonlinear(&s).into_iter().map(|x| x * h).collect();
            let s: Vec<C64> = (0..n).map(|j| e2[j] * v[j] + 0.5 * b[j]).collect();
            let c: Vec<C64> = nonlinear(&s).into_iter().map(|x| x * h).collect();
            let s: Vec<C64> = (0..n).map(|j| e[j] * v[j] + e2[j] * c[j]).collect();
            let d: Vec<C64> = nonlinear(&s).into_iter().map(|x| x * h).collect();
            for j in 0..n {
                v[j] = e[j] * v[j] + (e[j] * a[j] + 2.0 * e2[j] * (b[j] + c[j]) + d[j]) / 6.0;
            }
        },
        |v| grid.expand(&sp.inverse(v)),
    )
}
