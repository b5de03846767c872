use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{mean, sample_std};
use super::rollout::InferenceKind;
use super::suite::{evaluate_model, write_file, MetricSeries, SUMMARY_LABELS};
use crate::error::{Error, Result};
use crate::integrators::RK4_WEIGHTS;
use crate::pde::TrajectoryDataset;
use crate::tensor::{ParamStore, Tensor};
use crate::training::{Model, StateSet, Window};

/// Rolls one TI model out at each step in `dt_list`. Every curve is cut to
/// the times shared by all steps, so the curves are directly comparable.
pub fn timestep_refinement_study(
    model: &Model,
    store: &ParamStore,
    kind: InferenceKind,
    dt_list: &[f64],
    test: &TrajectoryDataset,
) -> Result<Vec<MetricSeries>> {
    if !model.regime.is_ti() {
        return Err(Error::Config(format!(
            "timestep refinement needs a TI model, got {}",
            model.regime
        )));
    }
    if dt_list.is_empty() {
        return Err(Error::Config("empty dt list".into()));
    }
    let series: Vec<MetricSeries> = dt_list
        .iter()
        .map(|&dt| evaluate_model(&format!("dt={dt}"), model, store, kind, dt, test))
        .collect::<Result<_>>()?;

    let reference = &series[0].times;
    let shared: Vec<f64> = reference
        .iter()
        .copied()
        .filter(|&t| series.iter().all(|s| s.times.iter().any(|&u| (u - t).abs() < 1e-9)))
        .collect();
    if shared.is_empty() {
        return Err(Error::Config("the time steps share no evaluation time".into()));
    }
    Ok(series
        .iter()
        .map(|s| {
            let keep: Vec<usize> = shared
                .iter()
                .map(|&t| s.times.iter().position(|&u| (u - t).abs() < 1e-9).unwrap())
                .collect();
            s.restrict(&keep, test.setup())
        })
        .collect())
}

/// `dt,t,rel_l2`
pub fn refinement_csv(dt_list: &[f64], series: &[MetricSeries]) -> String {
    let mut s = String::from("dt,t,rel_l2\n");
    for (dt, m) in dt_list.iter().zip(series) {
        for (t, e) in m.times.iter().zip(&m.mean) {
            writeln!(s, "{dt},{t},{e}").unwrap();
        }
    }
    s
}

pub const ALPHA_BINS: usize = 50;

/// Histograms of the four learned stage weights over a set of states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaHistogram {
    /// `counts[coef][bin]` over `[0, 1]` in equal bins.
    pub counts: Vec<Vec<u64>>,
    pub n_states: usize,
    pub mean: [f64; 4],
    pub median: [f64; 4],
    /// Largest deviation of a row sum from 1.
    pub max_row_sum_error: f64,
    /// Classical RK4 weights for comparison.
    pub reference: [f64; 4],
}

impl AlphaHistogram {
    pub fn bin_edges(bin: usize) -> (f64, f64) {
        let w = 1.0 / ALPHA_BINS as f64;
        (bin as f64 * w, (bin + 1) as f64 * w)
    }
}

/// Every training-window input state, `[n_samples·(last_input+1) × width]`.
pub fn training_window_states(set: &StateSet, window: Window) -> Tensor {
    let mut data = Vec::with_capacity(set.n_samples * window.pairs_per_sample() * set.width);
    for s in 0..set.n_samples {
        for t in 0..window.pairs_per_sample() {
            data.extend_from_slice(set.frame(s, t));
        }
    }
    Tensor::matrix(set.n_samples * window.pairs_per_sample(), set.width, data).expect("non-empty state set")
}

pub fn alpha_histogram(model: &Model, store: &ParamStore, states: &Tensor) -> Result<AlphaHistogram> {
    let alpha = model
        .alpha
        .as_ref()
        .ok_or_else(|| Error::Config(format!("a {} model has no α network", model.regime)))?;
    const CHUNK: usize = 4096;
    let n = states.rows();
    let mut cols: [Vec<f64>; 4] = Default::default();
    let mut counts = vec![vec![0u64; ALPHA_BINS]; 4];
    let mut max_row_sum_error: f64 = 0.0;
    let mut start = 0;
    while start < n {
        let idx: Vec<usize> = (start..(start + CHUNK).min(n)).collect();
        let a = alpha.eval(store, &states.select_rows(&idx))?;
        for r in 0..a.rows() {
            let row = a.row(r);
            max_row_sum_error = max_row_sum_error.max((row.iter().sum::<f64>() - 1.0).abs());
            for (c, &v) in row.iter().enumerate() {
                cols[c].push(v);
                let bin = ((v * ALPHA_BINS as f64).floor().max(0.0) as usize).min(ALPHA_BINS - 1);
                counts[c][bin] += 1;
            }
        }
        start += CHUNK;
    }
    let mut mean_a = [0.0; 4];
    let mut median_a = [0.0; 4];
    for c in 0..4 {
        mean_a[c] = mean(&cols[c]);
        median_a[c] = median(&mut cols[c]);
    }
    Ok(AlphaHistogram {
        counts,
        n_states: n,
        mean: mean_a,
        median: median_a,
        max_row_sum_error,
        reference: RK4_WEIGHTS,
    })
}

pub(crate) fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// `coef,bin_left,bin_right,count` with coefficients numbered 1 to 4.
pub fn alpha_hist_csv(h: &AlphaHistogram) -> String {
    let mut s = String::from("coef,bin_left,bin_right,count\n");
    for (c, bins) in h.counts.iter().enumerate() {
        for (b, count) in bins.iter().enumerate() {
            let (l, r) = AlphaHistogram::bin_edges(b);
            writeln!(s, "{},{l},{r},{count}", c + 1).unwrap();
        }
    }
    s
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub method: String,
    pub point: String,
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

/// Summary errors aggregated over independent trials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub rows: Vec<TrialRow>,
    pub n_trials: usize,
    /// Seeds whose trial failed, with the error; these are excluded.
    pub failed: Vec<(u64, String)>,
}

impl TrialSummary {
    pub fn get(&self, method: &str, point: &str) -> Option<&TrialRow> {
        self.rows.iter().find(|r| r.method == method && r.point == point)
    }
}

/// Runs `trial` once per seed (in parallel) and aggregates the summary
/// points of every method as mean and sample standard deviation.
pub fn multi_trial<F>(seeds: &[u64], trial: F) -> Result<TrialSummary>
where
    F: Fn(u64) -> Result<Vec<MetricSeries>> + Sync,
{
    if seeds.len() < 2 {
        return Err(Error::Config(format!("multi-trial needs at least 2 trials, got {}", seeds.len())));
    }
    let outcomes: Vec<Result<Vec<MetricSeries>>> = seeds.par_iter().map(|&s| trial(s)).collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (&seed, out) in seeds.iter().zip(outcomes) {
        match out {
            Ok(series) => ok.push(series),
            Err(e) => failed.push((seed, e.to_string())),
        }
    }
    let mut methods: Vec<String> = Vec::new();
    for series in &ok {
        for m in series {
            if !methods.contains(&m.method) {
                methods.push(m.method.clone());
            }
        }
    }
    let mut rows = Vec::new();
    for method in &methods {
        for (p, label) in SUMMARY_LABELS.iter().enumerate() {
            let values: Vec<f64> = ok
                .iter()
                .filter_map(|series| series.iter().find(|m| &m.method == method))
                .map(|m| m.summary[p].rel_l2)
                .collect();
            rows.push(TrialRow {
                method: method.clone(),
                point: label.to_string(),
                mean: mean(&values),
                std: sample_std(&values),
                n: values.len(),
            });
        }
    }
    Ok(TrialSummary {
        rows,
        n_trials: seeds.len(),
        failed,
    })
}

/// `method,point,mean,std,n`
pub fn trials_csv(summary: &TrialSummary) -> String {
    let mut s = String::from("method,point,mean,std,n\n");
    for r in &summary.rows {
        writeln!(s, "{},{},{},{},{}", r.method, r.point, r.mean, r.std, r.n).unwrap();
    }
    s
}

pub fn write_refinement(path: &Path, dt_list: &[f64], series: &[MetricSeries]) -> Result<()> {
    write_file(path, &refinement_csv(dt_list, series))
}

pub fn write_alpha_hist(path: &Path, h: &AlphaHistogram) -> Result<()> {
    write_file(path, &alpha_hist_csv(h))
}

pub fn write_trials(path: &Path, summary: &TrialSummary) -> Result<()> {
    write_file(path, &trials_csv(summary))
}
