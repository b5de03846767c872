use std::f64::consts::{FRAC_1_SQRT_2, PI};

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::grid::Grid1D;
use super::spectral::{Spectral1D, C64};
use crate::error::{Error, Result};
use crate::rng::{indexed_seed, rng};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrfFamily {
    /// Spectral density `S(k) = σ²(τ² + (2πk)²)^{−γ}`, mean mode included.
    Spectral1d,
    /// Covariance `σ²(−Δ + τ²)^{−γ}` with the mean mode removed.
    Laplacian1d,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GrfSpec {
    pub family: GrfFamily,
    pub sigma: f64,
    pub tau: f64,
    pub gamma: f64,
    pub seed: u64,
}

impl GrfSpec {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("sigma", self.sigma), ("tau", self.tau), ("gamma", self.gamma)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("GRF {name} must be positive, got {v}")));
            }
        }
        Ok(())
    }

    /// Standard deviation of the Fourier coefficient of mode `m` on a domain
    /// of length `length` (orthonormal exponential basis).
    pub fn mode_scale(&self, m: i64, length: f64) -> f64 {
        if m == 0 && self.family == GrfFamily::Laplacian1d {
            return 0.0;
        }
        let k = 2.0 * PI * m as f64 / length;
        self.sigma * (self.tau * self.tau + k * k).powf(-0.5 * self.gamma) / length.sqrt()
    }
}

/// Draws `count` periodic fields by spectral synthesis. Draw `i` uses its own
/// stream `indexed_seed(spec.seed, i)`, so draws do not depend on `count`.
pub fn sample_grf_1d_periodic(spec: &GrfSpec, grid: &Grid1D, count: usize) -> Result<Tensor> {
    spec.validate()?;
    grid.validate()?;
    if !grid.periodic {
        return Err(Error::Config("GRF sampling needs a periodic grid".into()));
    }
    if count == 0 {
        return Err(Error::contract("sample count must be positive"));
    }
    let n = grid.n_unique();
    let sp = Spectral1D::new(n, grid.length);
    let mut out = Vec::with_capacity(count * grid.n_points);
    for i in 0..count {
        let mut r = rng(indexed_seed(spec.seed, i as u64));
        let mut c = vec![C64::new(0.0, 0.0); n];
        let mut normal = || -> f64 { StandardNormal.sample(&mut r) };
        c[0] = C64::new(spec.mode_scale(0, grid.length) * normal(), 0.0);
        for m in 1..=n / 2 {
            let a = spec.mode_scale(m as i64, grid.length);
            if 2 * m == n {
                c[m] = C64::new(a * normal(), 0.0);
            } else {
                let z = C64::new(normal(), normal()) * (a * FRAC_1_SQRT_2);
                c[m] = z;
                c[n - m] = z.conj();
            }
        }
        // `inverse` divides by n; the synthesis sum does not.
        for v in c.iter_mut() {
            *v *= n as f64;
        }
        let u = sp.inverse(&c);
        out.extend(grid.expand(&u));
    }
    Tensor::matrix(count, grid.n_points, out)
}
