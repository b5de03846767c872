use rand::Rng;

use super::config::Regime;
use super::loss::{Batch, FrBatch, PairBatch};
use crate::error::{Error, Result};
use crate::nn::Normalization;
use crate::pde::TrajectoryDataset;
use crate::tensor::Tensor;

/// Frames restricted to the model's degrees of freedom, `[sample][time][dof]`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSet {
    pub n_samples: usize,
    pub n_frames: usize,
    pub width: usize,
    data: Vec<f64>,
}

impl StateSet {
    pub fn new(n_samples: usize, n_frames: usize, width: usize, data: Vec<f64>) -> Result<Self> {
        if n_samples * n_frames * width != data.len() || data.is_empty() {
            return Err(Error::shape("state set", &[n_samples, n_frames, width], &[data.len()]));
        }
        Ok(Self {
            n_samples,
            n_frames,
            width,
            data,
        })
    }

    pub fn from_dataset(ds: &TrajectoryDataset, indices: &[usize]) -> Self {
        let (n_samples, n_frames) = (ds.n_samples(), ds.n_frames());
        let mut data = Vec::with_capacity(n_samples * n_frames * indices.len());
        for s in 0..n_samples {
            for t in 0..n_frames {
                let f = ds.frame(s, t);
                data.extend(indices.iter().map(|&i| f[i]));
            }
        }
        Self {
            n_samples,
            n_frames,
            width: indices.len(),
            data,
        }
    }

    pub fn frame(&self, s: usize, t: usize) -> &[f64] {
        let start = (s * self.n_frames + t) * self.width;
        &self.data[start..start + self.width]
    }

    /// Frames `t` of every sample stacked, `[n_samples × width]`.
    pub fn frames_at(&self, t: usize) -> Tensor {
        let mut data = Vec::with_capacity(self.n_samples * self.width);
        for s in 0..self.n_samples {
            data.extend_from_slice(self.frame(s, t));
        }
        Tensor::matrix(self.n_samples, self.width, data).expect("non-empty state set")
    }

    pub fn pair_batch(&self, pairs: &[(usize, usize)]) -> PairBatch {
        let (mut x, mut y) = (Vec::new(), Vec::new());
        for &(s, i) in pairs {
            x.extend_from_slice(self.frame(s, i));
            y.extend_from_slice(self.frame(s, i + 1));
        }
        let b = pairs.len();
        PairBatch {
            inputs: Tensor::matrix(b, self.width, x).expect("non-empty batch"),
            targets: Tensor::matrix(b, self.width, y).expect("non-empty batch"),
        }
    }
}

/// Training-window geometry: inputs are frames `0..=last_input`, targets one later.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Window {
    pub last_input: usize,
}

impl Window {
    pub fn for_train_steps(train_steps: usize, n_frames: usize) -> Result<Self> {
        if train_steps + 1 >= n_frames {
            return Err(Error::Config(format!(
                "training window of {train_steps} steps needs {} frames, dataset has {n_frames}",
                train_steps + 2
            )));
        }
        Ok(Self { last_input: train_steps })
    }

    pub fn pairs_per_sample(&self) -> usize {
        self.last_input + 1
    }
}

/// `count` (sample, step) pairs drawn uniformly with replacement.
pub fn sample_pairs(rng: &mut impl Rng, n_samples: usize, window: Window, count: usize) -> Vec<(usize, usize)> {
    (0..count)
        .map(|_| (rng.gen_range(0..n_samples), rng.gen_range(0..window.pairs_per_sample())))
        .collect()
}

/// `b` random ICs against `q` random space-time points inside the window.
pub fn sample_fr_batch(
    rng: &mut impl Rng,
    set: &StateSet,
    sensors: &Tensor,
    dt_save: f64,
    window: Window,
    b: usize,
    q: usize,
) -> FrBatch {
    let samples: Vec<usize> = (0..b).map(|_| rng.gen_range(0..set.n_samples)).collect();
    let points: Vec<(usize, usize)> = (0..q)
        .map(|_| (rng.gen_range(0..set.width), rng.gen_range(0..=window.last_input)))
        .collect();
    fr_batch(set, sensors, dt_save, &samples, &points)
}

/// FR batch for explicit samples and `(dof, frame)` points.
pub fn fr_batch(set: &StateSet, sensors: &Tensor, dt_save: f64, samples: &[usize], points: &[(usize, usize)]) -> FrBatch {
    let d = sensors.cols();
    let mut ics = Vec::with_capacity(samples.len() * set.width);
    for &s in samples {
        ics.extend_from_slice(set.frame(s, 0));
    }
    let mut queries = Vec::with_capacity(points.len() * (d + 1));
    for &(j, n) in points {
        queries.extend_from_slice(sensors.row(j));
        queries.push(n as f64 * dt_save);
    }
    let mut targets = Vec::with_capacity(samples.len() * points.len());
    for &s in samples {
        targets.extend(points.iter().map(|&(j, n)| set.frame(s, n)[j]));
    }
    FrBatch {
        ics: Tensor::matrix(samples.len(), set.width, ics).expect("non-empty batch"),
        queries: Tensor::matrix(points.len(), d + 1, queries).expect("non-empty batch"),
        targets: Tensor::matrix(samples.len(), points.len(), targets).expect("non-empty batch"),
    }
}

/// Training batch for `regime`.
pub fn sample_batch(
    regime: Regime,
    rng: &mut impl Rng,
    set: &StateSet,
    sensors: &Tensor,
    dt_save: f64,
    window: Window,
    batch_size: usize,
    fr_points: usize,
) -> Batch {
    match regime {
        Regime::Fr => Batch::Fr(sample_fr_batch(rng, set, sensors, dt_save, window, batch_size, fr_points)),
        _ => Batch::Pairs(set.pair_batch(&sample_pairs(rng, set.n_samples, window, batch_size))),
    }
}

fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (mut n, mut sum) = (0usize, 0.0);
    for v in values.clone() {
        n += 1;
        sum += v;
    }
    let mean = sum / n.max(1) as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n.max(1) as f64;
    let std = var.sqrt();
    (mean, if std > 0.0 && std.is_finite() { std } else { 1.0 })
}

/// Fixed input/output maps fitted on the training window. The one-step
/// regimes see states in `0..=last_input + 1`; TI scales its output by the
/// spread of finite-difference rates, the others by the state spread.
pub fn fit_normalization(regime: Regime, set: &StateSet, window: Window, dt: f64) -> Normalization {
    let frames = window.last_input + 1;
    let states = (0..set.n_samples)
        .flat_map(move |s| (0..=frames).flat_map(move |t| set.frame(s, t).iter().copied()));
    let (mu, sigma) = mean_std(states);
    if regime.is_ti() {
        let rates = (0..set.n_samples).flat_map(move |s| {
            (0..frames).flat_map(move |t| {
                set.frame(s, t)
                    .iter()
                    .zip(set.frame(s, t + 1))
                    .map(move |(a, b)| (b - a) / dt)
            })
        });
        let (_, rate_std) = mean_std(rates);
        Normalization {
            input_shift: mu,
            input_scale: sigma,
            output_scale: rate_std,
            output_shift: 0.0,
        }
    } else {
        Normalization {
            input_shift: mu,
            input_scale: sigma,
            output_scale: sigma,
            output_shift: mu,
        }
    }
}
