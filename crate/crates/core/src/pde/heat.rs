use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::Grid3D;
use super::trajectory::{march, ratio, Trajectory};
use crate::error::{Error, Result};

/// Gaussian blob in grid-index units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlobSpec3D {
    pub amplitude: f64,
    pub center: [f64; 3],
    pub sigma: f64,
}

impl BlobSpec3D {
    /// Amplitude uniform in `[0, 1]`, each centre index uniform in `center_range`.
    pub fn sample(rng: &mut impl Rng, center_range: (f64, f64), sigma: f64) -> Self {
        let (lo, hi) = center_range;
        Self {
            amplitude: rng.gen_range(0.0..=1.0),
            center: [rng.gen_range(lo..=hi), rng.gen_range(lo..=hi), rng.gen_range(lo..=hi)],
            sigma,
        }
    }

    /// Checks the blob sits in the lower-left block with a margin of `sigma`.
    pub fn validate(&self, grid: &Grid3D) -> Result<()> {
        let limits = [grid.nx / 2, grid.ny / 2, grid.nz];
        for (axis, (&c, &n)) in self.center.iter().zip(&limits).enumerate() {
            if c < self.sigma || c > n as f64 - 1.0 - self.sigma {
                return Err(Error::Config(format!(
                    "blob centre {c} on axis {axis} violates the margin {} inside 0..{n}",
                    self.sigma
                )));
            }
        }
        Ok(())
    }
}

pub fn blob_ic(spec: &BlobSpec3D, grid: &Grid3D) -> Vec<f64> {
    let mut u = vec![0.0; grid.len()];
    let s2 = 2.0 * spec.sigma * spec.sigma;
    for k in 0..grid.nz {
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                if grid.active(i, j, k) {
                    let d2 = (i as f64 - spec.center[0]).powi(2)
                        + (j as f64 - spec.center[1]).powi(2)
                        + (k as f64 - spec.center[2]).powi(2);
                    u[grid.index(i, j, k)] = spec.amplitude * (-d2 / s2).exp();
                }
            }
        }
    }
    u
}

/// Largest stable explicit step `1 / (2α(1/dx² + 1/dy² + 1/dz²))`.
pub fn heat_stability_bound(grid: &Grid3D, alpha: f64) -> f64 {
    let [dx, dy, dz] = grid.spacing();
    1.0 / (2.0 * alpha * (1.0 / (dx * dx) + 1.0 / (dy * dy) + 1.0 / (dz * dz)))
}

/// Largest step that is stable and divides `dt_save` evenly.
pub fn heat_stable_dt(grid: &Grid3D, alpha: f64, dt_save: f64) -> f64 {
    let bound = heat_stability_bound(grid, alpha);
    dt_save / (dt_save / bound).ceil()
}

/// Explicit Euler with the 7-point Laplacian on the L-shaped grid. Cells
/// outside the domain and outside the box act as `T = 0` ghosts.
pub fn solve_heat3d(
    t0: &[f64],
    alpha: f64,
    grid: &Grid3D,
    dt: f64,
    t_final: f64,
    dt_save: f64,
) -> Result<Trajectory> {
    if t0.len() != grid.len() {
        return Err(Error::shape("solve_heat3d", &[t0.len()], &[grid.len()]));
    }
    if !(alpha > 0.0) {
        return Err(Error::Config(format!("diffusivity must be positive, got {alpha}")));
    }
    let bound = heat_stability_bound(grid, alpha);
    if dt > bound * (1.0 + 1e-12) {
        return Err(Error::Config(format!(
            "time step {dt} violates the explicit stability bound; need dt ≤ {bound}"
        )));
    }
    let substeps = ratio(dt_save, dt, "heat save interval")?;
    let n_saves = ratio(t_final, dt_save, "heat horizon")?;
    let h = dt_save / substeps as f64;

    let mask = grid.mask();
    let start: Vec<f64> = t0.iter().zip(&mask).map(|(&v, &a)| if a { v } else { 0.0 }).collect();
    let c = alpha * h;

    march(
        (start, vec![0.0; grid.len()]),
        h,
        substeps,
        n_saves,
        dt_save,
        |(u, lap)| {
            laplacian_into(grid, &mask, u, lap);
            for (v, l) in u.iter_mut().zip(lap.iter()) {
                *v += c * l;
            }
        },
        |(u, _)| u.clone(),
    )
}

/// 7-point Laplacian on the active cells; inactive cells and cells beyond the
/// box read as zero, inactive outputs are zero.
pub fn lshape_laplacian(grid: &Grid3D, u: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    laplacian_into(grid, &grid.mask(), u, &mut out);
    out
}

fn laplacian_into(grid: &Grid3D, mask: &[bool], u: &[f64], out: &mut [f64]) {
    let [dx, dy, dz] = grid.spacing();
    let (ix, iy, iz) = (1.0 / (dx * dx), 1.0 / (dy * dy), 1.0 / (dz * dz));
    let (nx, ny, nz) = (grid.nx, grid.ny, grid.nz);
    let (sy, sz) = (nx, nx * ny);
    let val = |idx: usize| if mask[idx] { u[idx] } else { 0.0 };
    for k in 0..nz {
        for j in 0..ny {
            for i in 0..nx {
                let idx = grid.index(i, j, k);
                if !mask[idx] {
                    out[idx] = 0.0;
                    continue;
                }
                let c = u[idx];
                let xm = if i > 0 { val(idx - 1) } else { 0.0 };
                let xp = if i + 1 < nx { val(idx + 1) } else { 0.0 };
                let ym = if j > 0 { val(idx - sy) } else { 0.0 };
                let yp = if j + 1 < ny { val(idx + sy) } else { 0.0 };
                let zm = if k > 0 { val(idx - sz) } else { 0.0 };
                let zp = if k + 1 < nz { val(idx + sz) } else { 0.0 };
                out[idx] = ix * (xm + xp - 2.0 * c) + iy * (ym + yp - 2.0 * c) + iz * (zm + zp - 2.0 * c);
            }
        }
    }
}
