use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Relative error plus whether the truth had zero norm, in which case the
/// value is the absolute norm of the prediction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RelativeError {
    pub value: f64,
    pub degenerate: bool,
}

pub fn relative_l2_slices(pred: &[f64], truth: &[f64]) -> Result<RelativeError> {
    if pred.len() != truth.len() {
        return Err(Error::shape("relative_l2", &[pred.len()], &[truth.len()]));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for (p, t) in pred.iter().zip(truth) {
        num += (p - t) * (p - t);
        den += t * t;
    }
    if den == 0.0 {
        let norm = pred.iter().map(|p| p * p).sum::<f64>().sqrt();
        return Ok(RelativeError {
            value: norm,
            degenerate: true,
        });
    }
    Ok(RelativeError {
        value: (num / den).sqrt(),
        degenerate: false,
    })
}

/// `‖pred − truth‖₂ / ‖truth‖₂` over the flattened field.
pub fn relative_l2(pred: &Tensor, truth: &Tensor) -> Result<f64> {
    if pred.shape() != truth.shape() {
        return Err(Error::shape("relative_l2", pred.shape(), truth.shape()));
    }
    relative_l2_slices(pred.data(), truth.data()).map(|r| r.value)
}

pub fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

/// Sample standard deviation (n − 1 denominator); zero for fewer than two values.
pub fn sample_std(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
}
