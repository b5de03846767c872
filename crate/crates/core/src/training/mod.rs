//! Losses, optimizers and the four training regimes.

mod checkpoint;
mod config;
mod data;
mod loss;
mod model;
mod optim;
mod trainer;

pub use checkpoint::{BlobMeta, Checkpoint, CheckpointMeta, OptimizerMeta, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{coordinate_scales, ModelSpec, Regime, ScheduleConfig, TrainConfig};
pub use data::{fit_normalization, fr_batch, sample_batch, sample_fr_batch, sample_pairs, StateSet, Window};
pub use loss::{
    fr_loss, one_step_ar_loss, one_step_euler_loss, one_step_rhs_loss, one_step_ti_loss, ti_predict, Batch, FrBatch, OperatorRhs,
    PairBatch,
};
pub use model::{AlphaNet, InputNorm, Model, ALPHA_PREFIX, DEEPONET_PREFIX};
pub use optim::{lr_exponential, OptimizerKind, OptimizerState};
pub use trainer::{
    alpha_stats_csv, alpha_summary, loss_curve_csv, train, write_loss_curve, AlphaRecord, LossRecord, Progress,
    Trainer, FR_TEST_SAMPLES,
};
