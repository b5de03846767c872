use rand::Rng;
use serde::{Deserialize, Serialize};

use super::grid::Grid1D;
use crate::error::{Error, Result};

pub const SOLITON_K_RANGE: (f64, f64) = (0.3, 0.7);
pub const SOLITON_D_RANGE: (f64, f64) = (0.0, 1.0);
pub const SOLITON_PERIOD: f64 = 10.0;

/// Two-soliton initial condition parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolitonSpec {
    pub k: [f64; 2],
    pub d: [f64; 2],
    pub period: f64,
}

impl SolitonSpec {
    pub fn sample(rng: &mut impl Rng) -> Self {
        let (k0, k1) = SOLITON_K_RANGE;
        let (d0, d1) = SOLITON_D_RANGE;
        Self {
            k: [rng.gen_range(k0..=k1), rng.gen_range(k0..=k1)],
            d: [rng.gen_range(d0..=d1), rng.gen_range(d0..=d1)],
            period: SOLITON_PERIOD,
        }
    }
}

/// `2k² sech²(k((x + P/2 − P d) mod P − P/2))`
pub fn soliton_profile(x: f64, k: f64, d: f64, period: f64) -> f64 {
    let p = period;
    let s = (x + 0.5 * p - p * d).rem_euclid(p) - 0.5 * p;
    let sech = 1.0 / (k * s).cosh();
    2.0 * k * k * sech * sech
}

pub fn soliton_ic(spec: &SolitonSpec, grid: &Grid1D) -> Result<Vec<f64>> {
    if (grid.length - spec.period).abs() > 1e-12 {
        return Err(Error::Config(format!(
            "soliton period {} must equal the domain length {}",
            spec.period, grid.length
        )));
    }
    Ok(grid
        .coords()
        .iter()
        .map(|&x| {
            spec.k
                .iter()
                .zip(&spec.d)
                .map(|(&k, &d)| soliton_profile(x, k, d, spec.period))
                .sum()
        })
        .collect())
}
