//! Inference rollouts and the error studies built on them.

mod metrics;
mod rollout;
mod studies;
mod suite;

pub use metrics::{mean, relative_l2, relative_l2_slices, sample_std, RelativeError};
pub use rollout::{rollout_model, step_count, InferenceKind, RolloutResult};
pub use studies::{
    alpha_hist_csv, alpha_histogram, multi_trial, refinement_csv, timestep_refinement_study,
    training_window_states, trials_csv, write_alpha_hist, write_refinement, write_trials, AlphaHistogram,
    TrialRow, TrialSummary, ALPHA_BINS,
};
pub use suite::{
    error_series, evaluate_model, evaluate_suite, evaluation_dt, method_label, metrics_csv, per_sample_csv,
    summary_csv, summary_meta, summary_times, write_suite, MethodMeta, MetricSeries, SuiteMethod, SuiteResult,
    SummaryColumn, SummaryMeta, SummaryPoint, SUMMARY_LABELS,
};
