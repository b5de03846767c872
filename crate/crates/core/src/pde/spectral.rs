use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

pub(crate) type C64 = Complex<f64>;

/// FFT plans and wavenumbers for a periodic grid of `n` unique points on `[0, L)`.
pub(crate) struct Spectral1D {
    pub n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Angular wavenumbers `2πj/L`.
    pub k: Vec<f64>,
    /// Same, with the Nyquist entry zeroed (for odd derivatives).
    pub k_odd: Vec<f64>,
    /// 2/3-rule mask.
    pub dealias: Vec<f64>,
}

impl Spectral1D {
    pub fn new(n: usize, length: f64) -> Self {
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(n);
        let inv = planner.plan_fft_inverse(n);
        let mut k = Vec::with_capacity(n);
        let mut k_odd = Vec::with_capacity(n);
        let mut dealias = Vec::with_capacity(n);
        for j in 0..n {
            let m = if j <= n / 2 { j as i64 } else { j as i64 - n as i64 };
            let kj = 2.0 * PI * m as f64 / length;
            k.push(kj);
            k_odd.push(if n % 2 == 0 && j == n / 2 { 0.0 } else { kj });
            dealias.push(if 3 * m.unsigned_abs() as usize <= n { 1.0 } else { 0.0 });
        }
        Self {
            n,
            fwd,
            inv,
            k,
            k_odd,
            dealias,
        }
    }

    pub fn forward(&self, u: &[f64]) -> Vec<C64> {
        let mut buf: Vec<C64> = u.iter().map(|&v| C64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    /// Inverse transform, normalised, real part.
    pub fn inverse(&self, v: &[C64]) -> Vec<f64> {
        let mut buf = v.to_vec();
        self.inv.process(&mut buf);
        let s = 1.0 / self.n as f64;
        buf.iter().map(|c| c.re * s).collect()
    }

    /// Dealiased transform of `c · ∂ₓ(u²)`, given `û`.
    pub fn flux_derivative(&self, v: &[C64], c: f64) -> Vec<C64> {
        let u = self.inverse(v);
        let sq: Vec<f64> = u.iter().map(|x| x * x).collect();
        let mut w = self.forward(&sq);
        for j in 0..self.n {
            w[j] *= C64::new(0.0, c * self.k_odd[j] * self.dealias[j]);
        }
        w
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_and_derivative() {
        let n = 32;
        let l = 2.0 * PI;
        let sp = Spectral1D::new(n, l);
        let x: Vec<f64> = (0..n).map(|i| i as f64 * l / n as f64).collect();
        let u: Vec<f64> = x.iter().map(|x| (3.0 * x).sin()).collect();
        let back = sp.inverse(&sp.forward(&u));
        for (a, b) in u.iter().zip(&back) {
            assert!((a - b).abs() < 1e-14);
        }
        // ∂ₓ(sin²(x)) = sin(2x)
        let s: Vec<f64> = x.iter().map(|x| x.sin()).collect();
        let d = sp.inverse(&sp.flux_derivative(&sp.forward(&s), 1.0));
        for (xi, di) in x.iter().zip(&d) {
            assert!((di - (2.0 * xi).sin()).abs() < 1e-13);
        }
    }
}
