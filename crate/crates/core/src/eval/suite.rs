use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::metrics::{mean, relative_l2_slices};
use super::rollout::{rollout_model, InferenceKind, RolloutResult};
use crate::error::{Error, Result};
use crate::pde::{PdeTag, ProblemSetup, TrajectoryDataset};
use crate::tensor::ParamStore;
use crate::training::{Checkpoint, Model, StateSet};

/// Spacing of the extrapolation summary points for each benchmark.
pub fn evaluation_dt(pde: PdeTag) -> f64 {
    match pde {
        PdeTag::Burgers1d => 0.01,
        PdeTag::Kdv1d => 0.05,
        PdeTag::Ks1d => 0.3,
        PdeTag::Heat3d => 0.015,
    }
}

pub const SUMMARY_LABELS: [&str; 4] = ["t+10dt_e", "t+20dt_e", "t+40dt_e", "T"];

/// Nominal summary times `t_train + {10, 20, 40}·Δt_e` and `T`.
pub fn summary_times(setup: &ProblemSetup) -> [f64; 4] {
    let dte = evaluation_dt(setup.pde);
    let t = setup.t_train;
    [t + 10.0 * dte, t + 20.0 * dte, t + 40.0 * dte, setup.t_final()]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SummaryPoint {
    pub label: String,
    /// Requested time.
    pub t_nominal: f64,
    /// Nearest evaluated time actually used.
    pub t: f64,
    pub rel_l2: f64,
}

/// Relative L2 error over time for one method, averaged over test samples.
#[derive(Clone, Debug, PartialEq)]
pub struct MetricSeries {
    pub method: String,
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    /// `[sample][time]`.
    pub per_sample: Vec<Vec<f64>>,
    /// Index into `times` of the training-window boundary.
    pub boundary_index: usize,
    pub t_train: f64,
    pub summary: Vec<SummaryPoint>,
    /// Samples whose rollout blew up; their errors are frozen after it.
    pub blown_up: usize,
    /// Sample-time pairs where the truth had zero norm.
    pub degenerate: usize,
}

impl MetricSeries {
    pub fn final_error(&self) -> f64 {
        *self.mean.last().expect("series holds at least one time")
    }

    /// Mean error at the evaluated time nearest to `t`.
    pub fn at(&self, t: f64) -> f64 {
        self.mean[nearest(&self.times, t)]
    }

    /// Keeps only the listed time indices and recomputes the summary.
    pub fn restrict(&self, keep: &[usize], setup: &ProblemSetup) -> Self {
        let times: Vec<f64> = keep.iter().map(|&i| self.times[i]).collect();
        let per_sample: Vec<Vec<f64>> = self
            .per_sample
            .iter()
            .map(|s| keep.iter().map(|&i| s[i]).collect())
            .collect();
        build_series(&self.method, times, per_sample, setup, self.blown_up, self.degenerate)
    }
}

fn nearest(times: &[f64], t: f64) -> usize {
    let mut best = 0;
    for (i, &ti) in times.iter().enumerate() {
        if (ti - t).abs() < (times[best] - t).abs() {
            best = i;
        }
    }
    best
}

/// Saved-frame index for time `t`, if `t` lies on the stored grid.
fn saved_index(t: f64, dt_save: f64, n_frames: usize) -> Option<usize> {
    let j = t / dt_save;
    let r = j.round();
    ((j - r).abs() < 1e-6 && (r as usize) < n_frames).then_some(r as usize)
}

fn build_series(
    method: &str,
    times: Vec<f64>,
    per_sample: Vec<Vec<f64>>,
    setup: &ProblemSetup,
    blown_up: usize,
    degenerate: usize,
) -> MetricSeries {
    let mean_curve: Vec<f64> = (0..times.len())
        .map(|k| mean(&per_sample.iter().map(|s| s[k]).collect::<Vec<_>>()))
        .collect();
    let boundary_index = times
        .iter()
        .rposition(|&t| t <= setup.t_train + 1e-9)
        .unwrap_or(0);
    let summary = SUMMARY_LABELS
        .iter()
        .zip(summary_times(setup))
        .map(|(label, t_nominal)| {
            let i = nearest(&times, t_nominal);
            SummaryPoint {
                label: label.to_string(),
                t_nominal,
                t: times[i],
                rel_l2: mean_curve[i],
            }
        })
        .collect();
    MetricSeries {
        method: method.to_string(),
        times,
        mean: mean_curve,
        per_sample,
        boundary_index,
        t_train: setup.t_train,
        summary,
        blown_up,
        degenerate,
    }
}

/// Compares a rollout with the stored truth at every time both share.
pub fn error_series(method: &str, result: &RolloutResult, truth: &StateSet, setup: &ProblemSetup) -> Result<MetricSeries> {
    let b = result.states[0].rows();
    if b != truth.n_samples || result.states[0].cols() != truth.width {
        return Err(Error::shape(
            "rollout vs truth",
            result.states[0].shape(),
            &[truth.n_samples, truth.width],
        ));
    }
    let mut times = Vec::new();
    let mut per_sample = vec![Vec::new(); b];
    let mut degenerate = 0;
    for (k, &t) in result.times.iter().enumerate() {
        let Some(j) = saved_index(t, setup.dt_save, truth.n_frames) else {
            continue;
        };
        times.push(t);
        let pred = &result.states[k];
        for (s, errs) in per_sample.iter_mut().enumerate() {
            let e = relative_l2_slices(pred.row(s), truth.frame(s, j))?;
            degenerate += e.degenerate as usize;
            errs.push(e.value);
        }
    }
    if times.is_empty() {
        return Err(Error::Config(format!(
            "no evaluation time of step {} falls on the stored grid",
            result.dt_eval
        )));
    }
    Ok(build_series(method, times, per_sample, setup, result.n_blown_up(), degenerate))
}

/// Display name of a method: the regime label, plus the scheme when it
/// differs from the regime's default.
pub fn method_label(model: &Model, kind: InferenceKind) -> String {
    let base = model.regime.label();
    if kind == InferenceKind::default_for(model.regime) {
        base.to_string()
    } else {
        format!("{base} ({})", kind.name())
    }
}

/// Rolls `model` out over every test sample and scores it against the truth.
pub fn evaluate_model(
    method: &str,
    model: &Model,
    store: &ParamStore,
    kind: InferenceKind,
    dt_eval: f64,
    test: &TrajectoryDataset,
) -> Result<MetricSeries> {
    check_setup(model, test)?;
    let truth = StateSet::from_dataset(test, model.state_indices());
    let ics = truth.frames_at(0);
    let result = rollout_model(model, store, &ics, kind, dt_eval, test.setup().t_final())?;
    error_series(method, &result, &truth, test.setup())
}

fn check_setup(model: &Model, test: &TrajectoryDataset) -> Result<()> {
    let s = test.setup();
    if model.setup.pde != s.pde || model.setup.grid != s.grid {
        return Err(Error::Config(format!(
            "model was trained on {} with a different grid than the {} test set",
            model.setup.pde, s.pde
        )));
    }
    Ok(())
}

/// One entry of a suite; `checkpoint` is `None` when it could not be found.
pub struct SuiteMethod<'a> {
    pub name: String,
    pub checkpoint: Option<&'a Checkpoint>,
    /// Defaults to the regime's inference kind.
    pub kind: Option<InferenceKind>,
}

#[derive(Clone, Debug, Default)]
pub struct SuiteResult {
    pub series: Vec<MetricSeries>,
    /// Notices for methods that were skipped.
    pub skipped: Vec<String>,
}

/// Evaluates every available method on the common test set at `dt_eval`
/// (the stored step when `None`).
pub fn evaluate_suite(methods: &[SuiteMethod<'_>], test: &TrajectoryDataset, dt_eval: Option<f64>) -> Result<SuiteResult> {
    let mut out = SuiteResult::default();
    for m in methods {
        let Some(ckpt) = m.checkpoint else {
            out.skipped.push(format!("{}: checkpoint missing, skipped", m.name));
            continue;
        };
        let model = ckpt.model()?;
        let kind = m.kind.unwrap_or_else(|| InferenceKind::default_for(model.regime));
        let dt = dt_eval.unwrap_or(test.setup().dt_save);
        out.series
            .push(evaluate_model(&m.name, &model, &ckpt.best, kind, dt, test)?);
    }
    Ok(out)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(path, text)?;
    Ok(())
}

/// `method,t,rel_l2`
pub fn metrics_csv(series: &[MetricSeries]) -> String {
    let mut s = String::from("method,t,rel_l2\n");
    for m in series {
        for (t, e) in m.times.iter().zip(&m.mean) {
            writeln!(s, "{},{t},{e}", m.method).unwrap();
        }
    }
    s
}

/// One row per method with the four summary columns.
pub fn summary_csv(series: &[MetricSeries]) -> String {
    let mut s = format!("method,{}\n", SUMMARY_LABELS.join(","));
    for m in series {
        let cols: Vec<String> = m.summary.iter().map(|p| p.rel_l2.to_string()).collect();
        writeln!(s, "{},{}", m.method, cols.join(",")).unwrap();
    }
    s
}

/// `method,sample,rel_l2` at the final time.
pub fn per_sample_csv(series: &[MetricSeries]) -> String {
    let mut s = String::from("method,sample,rel_l2\n");
    for m in series {
        for (i, errs) in m.per_sample.iter().enumerate() {
            writeln!(s, "{},{i},{}", m.method, errs.last().copied().unwrap_or(f64::NAN)).unwrap();
        }
    }
    s
}

/// How the summary columns map onto evaluated times.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryMeta {
    pub pde: PdeTag,
    pub t_train: f64,
    pub dt_e: f64,
    pub dt_save: f64,
    pub columns: Vec<SummaryColumn>,
    pub methods: Vec<MethodMeta>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SummaryColumn {
    pub label: String,
    pub t_nominal: f64,
    pub t: f64,
    pub saved_frame: Option<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MethodMeta {
    pub method: String,
    pub boundary_index: usize,
    pub blown_up: usize,
    pub degenerate: usize,
}

pub fn summary_meta(series: &[MetricSeries], setup: &ProblemSetup) -> SummaryMeta {
    let columns = match series.first() {
        Some(m) => m
            .summary
            .iter()
            .map(|p| SummaryColumn {
                label: p.label.clone(),
                t_nominal: p.t_nominal,
                t: p.t,
                saved_frame: saved_index(p.t, setup.dt_save, setup.n_t + 1),
            })
            .collect(),
        None => Vec::new(),
    };
    SummaryMeta {
        pde: setup.pde,
        t_train: setup.t_train,
        dt_e: evaluation_dt(setup.pde),
        dt_save: setup.dt_save,
        columns,
        methods: series
            .iter()
            .map(|m| MethodMeta {
                method: m.method.clone(),
                boundary_index: m.boundary_index,
                blown_up: m.blown_up,
                degenerate: m.degenerate,
            })
            .collect(),
    }
}

/// Writes `metrics.csv`, `summary.csv`, `per_sample.csv` and `summary_meta.json` into `dir`.
pub fn write_suite(dir: &Path, series: &[MetricSeries], setup: &ProblemSetup) -> Result<()> {
    write_text(&dir.join("metrics.csv"), &metrics_csv(series))?;
    write_text(&dir.join("summary.csv"), &summary_csv(series))?;
    write_text(&dir.join("per_sample.csv"), &per_sample_csv(series))?;
    let meta = serde_json::to_string_pretty(&summary_meta(series, setup))?;
    write_text(&dir.join("summary_meta.json"), &(meta + "\n"))
}

pub(crate) fn write_file(path: &Path, text: &str) -> Result<()> {
    write_text(path, text)
}
