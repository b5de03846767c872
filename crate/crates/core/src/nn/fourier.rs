use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Sinusoidal coordinate features. Coordinates are first divided by
/// `domain_scale` (one entry per coordinate); the scaled coordinate is kept
/// and `sin(πkc)`, `cos(πkc)` for `k = 1..=K` are appended, so `d` inputs
/// become `d·(2K+1)` features. `K = 0` passes the scaled coordinates through.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierFeatureSpec {
    pub num_frequencies: usize,
    pub domain_scale: Vec<f64>,
}

impl FourierFeatureSpec {
    pub fn identity(dims: usize) -> Self {
        Self {
            num_frequencies: 0,
            domain_scale: vec![1.0; dims],
        }
    }

    pub fn new(num_frequencies: usize, domain_scale: Vec<f64>) -> Self {
        Self {
            num_frequencies,
            domain_scale,
        }
    }

    pub fn input_dims(&self) -> usize {
        self.domain_scale.len()
    }

    pub fn encoded_dims(&self) -> usize {
        self.input_dims() * (2 * self.num_frequencies + 1)
    }
}

pub fn fourier_encode(coords: &Tensor, spec: &FourierFeatureSpec) -> Result<Tensor> {
    let d = spec.input_dims();
    if coords.shape().len() != 2 || coords.cols() != d {
        return Err(Error::shape("fourier_encode", coords.shape(), &[d]));
    }
    if spec.domain_scale.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::Config(format!(
            "Fourier domain scales must be positive, got {:?}",
            spec.domain_scale
        )));
    }
    let n = coords.rows();
    let k_max = spec.num_frequencies;
    let width = spec.encoded_dims();
    let mut out = Vec::with_capacity(n * width);
    for r in 0..n {
        let row = coords.row(r);
        let scaled: Vec<f64> = row.iter().zip(&spec.domain_scale).map(|(c, s)| c / s).collect();
        out.extend_from_slice(&scaled);
        for &c in &scaled {
            for k in 1..=k_max {
                let arg = PI * k as f64 * c;
                out.push(arg.sin());
                out.push(arg.cos());
            }
        }
    }
    Tensor::matrix(n, width, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_with_one_frequency() {
        let x = Tensor::matrix(1, 1, vec![0.0]).unwrap();
        let enc = fourier_encode(&x, &FourierFeatureSpec::new(1, vec![1.0])).unwrap();
        assert_eq!(enc.data(), &[0.0, 0.0, 1.0]);
    }

    #[test]
    fn widths_for_ten_frequencies() {
        let x = Tensor::matrix(3, 1, vec![0.1, 0.2, 0.3]).unwrap();
        let enc = fourier_encode(&x, &FourierFeatureSpec::new(10, vec![1.0])).unwrap();
        assert_eq!(enc.shape(), &[3, 21]);
        let xt = Tensor::matrix(2, 2, vec![0.1, 0.5, 0.2, 0.7]).unwrap();
        let enc = fourier_encode(&xt, &FourierFeatureSpec::new(10, vec![1.0, 1.0])).unwrap();
        assert_eq!(enc.shape(), &[2, 42]);
    }

    #[test]
    fn zero_frequencies_pass_through() {
        let x = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let enc = fourier_encode(&x, &FourierFeatureSpec::identity(2)).unwrap();
        assert_eq!(enc, x);
    }

    #[test]
    fn scaling_is_applied_before_features() {
        let x = Tensor::matrix(1, 1, vec![3.0]).unwrap();
        let enc = fourier_encode(&x, &FourierFeatureSpec::new(1, vec![6.0])).unwrap();
        assert!((enc.data()[0] - 0.5).abs() < 1e-15);
        assert!((enc.data()[1] - 1.0).abs() < 1e-15); // sin(π/2)
    }
}
