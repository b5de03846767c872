use std::fmt::Write as _;
use std::path::Path;

use rand::seq::index::sample as sample_indices;
use serde::{Deserialize, Serialize};

use super::checkpoint::{Checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
use super::config::{ModelSpec, Regime, TrainConfig};
use super::data::{fit_normalization, fr_batch, sample_batch, StateSet, Window};
use super::loss::Batch;
use super::model::Model;
use super::optim::OptimizerState;
use crate::error::{Error, Result};
use crate::pde::TrajectoryDataset;
use crate::rng::{derive_seed, indexed_seed, rng};
use crate::tensor::{Graph, ParamStore, Tensor};

/// FR test loss uses at most this many held-out ICs.
pub const FR_TEST_SAMPLES: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub epoch: u64,
    /// Mean over the finite updates since the previous record.
    pub train_loss: Option<f64>,
    pub test_loss: Option<f64>,
    pub lr: f64,
}

/// Per-coefficient α summary over the held-out inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaRecord {
    pub epoch: u64,
    pub mean: [f64; 4],
    pub median: [f64; 4],
}

/// Counters that make an interrupted run resumable exactly.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub window_sum: f64,
    pub window_count: u64,
    pub nonfinite_streak: usize,
    pub skipped: u64,
}

pub struct Trainer {
    cfg: TrainConfig,
    model: Model,
    store: ParamStore,
    best: ParamStore,
    optimizers: Vec<OptimizerState>,
    epoch: u64,
    best_epoch: u64,
    best_test_loss: Option<f64>,
    curve: Vec<LossRecord>,
    alpha_stats: Vec<AlphaRecord>,
    progress: Progress,
    train: StateSet,
    window: Window,
    test_batch: Batch,
}

struct Prepared {
    train: StateSet,
    window: Window,
    test_batch: Batch,
}

fn prepare(cfg: &TrainConfig, ds: &TrajectoryDataset, sensors: &Tensor) -> Result<Prepared> {
    cfg.validate()?;
    let setup = ds.setup();
    if (cfg.dt_train - setup.dt_save).abs() > 1e-12 * setup.dt_save {
        return Err(Error::Config(format!(
            "dt_train {} must equal the dataset spacing {} (pairs are one saved step apart)",
            cfg.dt_train, setup.dt_save
        )));
    }
    let n_train = ds.manifest.n_train;
    if n_train == 0 || n_train == ds.n_samples() {
        return Err(Error::Config(format!(
            "need both training and held-out samples, have {n_train} of {}",
            ds.n_samples()
        )));
    }
    let indices = setup.grid.active_indices();
    let train = StateSet::from_dataset(&ds.train_split()?, &indices);
    let test = StateSet::from_dataset(&ds.test_split()?, &indices);
    let window = Window::for_train_steps(setup.train_steps(), ds.n_frames())?;
    let available = train.n_samples * window.pairs_per_sample();
    if cfg.batch_size > available {
        return Err(Error::Config(format!(
            "batch_size {} exceeds the {available} available training items",
            cfg.batch_size
        )));
    }
    let mut r = rng(derive_seed(cfg.seed, "test"));
    let test_batch = match cfg.regime {
        Regime::Fr => {
            let samples: Vec<usize> = (0..test.n_samples.min(FR_TEST_SAMPLES)).collect();
            let total = test.width * (window.last_input + 1);
            let points: Vec<(usize, usize)> = sample_indices(&mut r, total, cfg.test_pairs.min(total))
                .into_iter()
                .map(|k| (k % test.width, k / test.width))
                .collect();
            Batch::Fr(fr_batch(&test, sensors, setup.dt_save, &samples, &points))
        }
        _ => {
            let per = window.pairs_per_sample();
            let total = test.n_samples * per;
            let mut picks: Vec<usize> = if total <= cfg.test_pairs {
                (0..total).collect()
            } else {
                sample_indices(&mut r, total, cfg.test_pairs).into_vec()
            };
            picks.sort_unstable();
            let pairs: Vec<(usize, usize)> = picks.into_iter().map(|k| (k / per, k % per)).collect();
            Batch::Pairs(test.pair_batch(&pairs))
        }
    };
    Ok(Prepared {
        train,
        window,
        test_batch,
    })
}

impl Trainer {
    pub fn new(cfg: &TrainConfig, spec: &ModelSpec, ds: &TrajectoryDataset) -> Result<Self> {
        let setup = ds.setup();
        let sensors = setup.grid.active_coords();
        let prep = prepare(cfg, ds, &sensors)?;
        let norm = fit_normalization(cfg.regime, &prep.train, prep.window, setup.dt_save);
        let mut store = ParamStore::new();
        let model = Model::init(cfg.regime, spec, setup, norm, cfg.dt_train, cfg.seed, &mut store)?;
        let mut optimizers = vec![OptimizerState::new(
            cfg.schedule.optimizer,
            cfg.schedule.weight_decay,
            &store,
            &model.main_param_ids(),
        )];
        if model.alpha.is_some() {
            optimizers.push(OptimizerState::new(
                cfg.alpha_schedule.optimizer,
                cfg.alpha_schedule.weight_decay,
                &store,
                &model.alpha_param_ids(),
            ));
        }
        Ok(Self {
            cfg: cfg.clone(),
            best: store.clone(),
            model,
            store,
            optimizers,
            epoch: 0,
            best_epoch: 0,
            best_test_loss: None,
            curve: Vec::new(),
            alpha_stats: Vec::new(),
            progress: Progress::default(),
            train: prep.train,
            window: prep.window,
            test_batch: prep.test_batch,
        })
    }

    /// Continues from a checkpoint written by [`Trainer::checkpoint`] on the same dataset.
    pub fn resume(ckpt: Checkpoint, ds: &TrajectoryDataset) -> Result<Self> {
        let meta = ckpt.meta;
        if &meta.setup != ds.setup() {
            return Err(Error::Config("checkpoint was trained on a different problem setup".into()));
        }
        let sensors = meta.setup.grid.active_coords();
        let prep = prepare(&meta.config, ds, &sensors)?;
        let model = Model::attach(
            meta.regime,
            &meta.spec,
            &meta.setup,
            meta.norm.clone(),
            meta.config.dt_train,
            &ckpt.params,
        )?;
        let want = if model.alpha.is_some() { 2 } else { 1 };
        if ckpt.optimizers.len() != want {
            return Err(Error::Checkpoint(format!(
                "expected {want} optimizer states, found {}",
                ckpt.optimizers.len()
            )));
        }
        Ok(Self {
            cfg: meta.config,
            model,
            store: ckpt.params,
            best: ckpt.best,
            optimizers: ckpt.optimizers,
            epoch: meta.epoch,
            best_epoch: meta.best_epoch,
            best_test_loss: meta.best_test_loss,
            curve: meta.curve,
            alpha_stats: meta.alpha_stats,
            progress: meta.progress,
            train: prep.train,
            window: prep.window,
            test_batch: prep.test_batch,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Changes the total update budget (e.g. to extend a resumed run).
    pub fn set_epochs(&mut self, epochs: u64) {
        self.cfg.epochs = epochs;
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn params(&self) -> &ParamStore {
        &self.store
    }

    pub fn best_params(&self) -> &ParamStore {
        &self.best
    }

    pub fn epoch(&self) -> u64 {
        self.epoch
    }

    pub fn curve(&self) -> &[LossRecord] {
        &self.curve
    }

    pub fn alpha_stats(&self) -> &[AlphaRecord] {
        &self.alpha_stats
    }

    pub fn best_test_loss(&self) -> Option<f64> {
        self.best_test_loss
    }

    pub fn test_batch(&self) -> &Batch {
        &self.test_batch
    }

    /// One sampled-batch update. Returns the batch loss, or `None` when the
    /// loss or its gradient was non-finite and the update was skipped.
    pub fn step(&mut self) -> Result<Option<f64>> {
        let e = self.epoch;
        let mut r = rng(indexed_seed(derive_seed(self.cfg.seed, "batching"), e));
        let batch = sample_batch(
            self.cfg.regime,
            &mut r,
            &self.train,
            &self.model.net.sensors,
            self.model.setup.dt_save,
            self.window,
            self.cfg.batch_size,
            self.cfg.fr_points,
        );
        let lr = self.cfg.schedule.lr(e);
        self.store.zero_grad();
        let loss = {
            let mut g = Graph::new();
            match self.model.loss(&self.store, &mut g, &batch) {
                Ok(l) => {
                    let v = g.value(l).item();
                    if v.is_finite() {
                        g.backward(l, &mut self.store)?;
                        self.store.iter().all(|(_, p)| p.grad.all_finite()).then_some(v)
                    } else {
                        None
                    }
                }
                Err(Error::Blowup { .. }) | Err(Error::NonFinite(_)) => None,
                Err(err) => return Err(err),
            }
        };
        match loss {
            Some(v) => {
                self.optimizers[0].step(&mut self.store, lr)?;
                if let Some(opt) = self.optimizers.get_mut(1) {
                    opt.step(&mut self.store, self.cfg.alpha_schedule.lr(e))?;
                }
                self.progress.window_sum += v;
                self.progress.window_count += 1;
                self.progress.nonfinite_streak = 0;
            }
            None => {
                self.progress.nonfinite_streak += 1;
                self.progress.skipped += 1;
                if self.progress.nonfinite_streak >= self.cfg.divergence_patience {
                    return Err(Error::Divergence(format!(
                        "{} consecutive non-finite losses ending at update {} (lr {lr:e}, {} skipped in total, best test loss {:?} at update {})",
                        self.progress.nonfinite_streak,
                        e + 1,
                        self.progress.skipped,
                        self.best_test_loss,
                        self.best_epoch
                    )));
                }
            }
        }
        self.epoch += 1;
        if self.epoch % self.cfg.eval_every == 0 || self.epoch == self.cfg.epochs {
            self.record(lr)?;
        }
        Ok(loss)
    }

    /// Loss of `store` on the fixed held-out batch; `None` if non-finite.
    pub fn test_loss(&self, store: &ParamStore) -> Result<Option<f64>> {
        let mut g = Graph::new();
        match self.model.loss(store, &mut g, &self.test_batch) {
            Ok(l) => Ok(Some(g.value(l).item()).filter(|v| v.is_finite())),
            Err(Error::Blowup { .. }) | Err(Error::NonFinite(_)) => Ok(None),
            Err(e) => Err(e),
        }
    }

    fn record(&mut self, lr: f64) -> Result<()> {
        let test = self.test_loss(&self.store)?;
        let train = (self.progress.window_count > 0)
            .then(|| self.progress.window_sum / self.progress.window_count as f64);
        self.progress.window_sum = 0.0;
        self.progress.window_count = 0;
        self.curve.push(LossRecord {
            epoch: self.epoch,
            train_loss: train,
            test_loss: test,
            lr,
        });
        if let Some(t) = test {
            if self.best_test_loss.map_or(true, |b| t < b) {
                self.best_test_loss = Some(t);
                self.best_epoch = self.epoch;
                self.best = self.store.clone();
            }
        }
        if let (Some(alpha), Batch::Pairs(p)) = (&self.model.alpha, &self.test_batch) {
            let a = alpha.eval(&self.store, &p.inputs)?;
            self.alpha_stats.push(alpha_summary(self.epoch, &a));
        }
        Ok(())
    }

    /// Runs until the configured number of updates.
    pub fn run(&mut self) -> Result<()> {
        while self.epoch < self.cfg.epochs {
            self.step()?;
        }
        Ok(())
    }

    /// Runs until `epoch` updates have been made (capped by the budget).
    pub fn run_until(&mut self, epoch: u64) -> Result<()> {
        while self.epoch < epoch.min(self.cfg.epochs) {
            self.step()?;
        }
        Ok(())
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            meta: CheckpointMeta {
                format_version: CHECKPOINT_VERSION,
                regime: self.cfg.regime,
                config: self.cfg.clone(),
                spec: self.model.spec.clone(),
                setup: self.model.setup.clone(),
                norm: self.model.net.norm.clone(),
                epoch: self.epoch,
                best_epoch: self.best_epoch,
                best_test_loss: self.best_test_loss,
                curve: self.curve.clone(),
                alpha_stats: self.alpha_stats.clone(),
                progress: self.progress.clone(),
                optimizers: Vec::new(),
                blobs: Vec::new(),
            },
            params: self.store.clone(),
            best: self.best.clone(),
            optimizers: self.optimizers.clone(),
        }
    }
}

/// Trains from scratch and returns the final checkpoint; its best
/// parameter set is the one with the lowest recorded test loss.
pub fn train(cfg: &TrainConfig, spec: &ModelSpec, ds: &TrajectoryDataset) -> Result<Checkpoint> {
    let mut t = Trainer::new(cfg, spec, ds)?;
    t.run()?;
    Ok(t.checkpoint())
}

pub fn alpha_summary(epoch: u64, alpha: &Tensor) -> AlphaRecord {
    let mut mean = [0.0; 4];
    let mut median = [0.0; 4];
    for j in 0..4 {
        let mut col: Vec<f64> = (0..alpha.rows()).map(|r| alpha.row(r)[j]).collect();
        mean[j] = col.iter().sum::<f64>() / col.len() as f64;
        col.sort_by(f64::total_cmp);
        let n = col.len();
        median[j] = if n % 2 == 1 { col[n / 2] } else { 0.5 * (col[n / 2 - 1] + col[n / 2]) };
    }
    AlphaRecord { epoch, mean, median }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), |x| format!("{x:e}"))
}

/// `epoch,train_loss,test_loss,lr`
pub fn loss_curve_csv(curve: &[LossRecord]) -> String {
    let mut s = String::from("epoch,train_loss,test_loss,lr\n");
    for r in curve {
        let _ = writeln!(s, "{},{},{},{:e}", r.epoch, fmt_opt(r.train_loss), fmt_opt(r.test_loss), r.lr);
    }
    s
}

/// `epoch,coef,mean,median`
pub fn alpha_stats_csv(stats: &[AlphaRecord]) -> String {
    let mut s = String::from("epoch,coef,mean,median\n");
    for r in stats {
        for j in 0..4 {
            let _ = writeln!(s, "{},{},{:e},{:e}", r.epoch, j + 1, r.mean[j], r.median[j]);
        }
    }
    s
}

pub fn write_loss_curve(path: &Path, curve: &[LossRecord]) -> Result<()> {
    std::fs::write(path, loss_curve_csv(curve))?;
    Ok(())
}
