use serde::{Deserialize, Serialize};

use super::optim::OptimizerKind;
use crate::error::{Error, Result};
use crate::nn::{Activation, DeepOnetSpec, FourierFeatureSpec, MlpSpec, OutputActivation};
use crate::pde::{PdeTag, ProblemSetup, SpatialGrid};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Full rollout: `(IC, x, t) ↦ u(x, t)`.
    Fr,
    /// Autoregressive state-to-next-state map.
    Ar,
    TiRk4,
    TiLearnable,
}

impl Regime {
    pub const ALL: [Regime; 4] = [Regime::Fr, Regime::Ar, Regime::TiRk4, Regime::TiLearnable];

    pub fn name(self) -> &'static str {
        match self {
            Regime::Fr => "fr",
            Regime::Ar => "ar",
            Regime::TiRk4 => "ti_rk4",
            Regime::TiLearnable => "ti_learnable",
        }
    }

    /// Row label used in reports.
    pub fn label(self) -> &'static str {
        match self {
            Regime::Fr => "DON FR",
            Regime::Ar => "DON AR",
            Regime::TiRk4 => "TI-DON",
            Regime::TiLearnable => "TI(L)-DON",
        }
    }

    pub fn is_ti(self) -> bool {
        matches!(self, Regime::TiRk4 | Regime::TiLearnable)
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "fr" => Regime::Fr,
            "ar" => Regime::Ar,
            "ti_rk4" | "ti" => Regime::TiRk4,
            "ti_learnable" | "til" => Regime::TiLearnable,
            other => return Err(Error::Config(format!("unknown regime `{other}`"))),
        })
    }
}

/// Optimizer plus staircase learning-rate schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScheduleConfig {
    pub optimizer: OptimizerKind,
    pub lr0: f64,
    pub decay_factor: f64,
    pub decay_every: u64,
    #[serde(default)]
    pub weight_decay: f64,
}

impl ScheduleConfig {
    pub fn adam(lr0: f64, decay_factor: f64, decay_every: u64) -> Self {
        Self {
            optimizer: OptimizerKind::Adam,
            lr0,
            decay_factor,
            decay_every,
            weight_decay: 0.0,
        }
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::Config(format!("{what}: lr0 must be positive, got {}", self.lr0)));
        }
        if !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::Config(format!(
                "{what}: decay_factor must lie in (0, 1], got {}",
                self.decay_factor
            )));
        }
        if self.decay_every == 0 {
            return Err(Error::Config(format!("{what}: decay_every must be at least 1")));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config(format!("{what}: negative weight decay")));
        }
        Ok(())
    }

    pub fn lr(&self, step: u64) -> f64 {
        super::optim::lr_exponential(self.lr0, self.decay_factor, self.decay_every, step)
    }
}

/// One epoch is one sampled-batch update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub regime: Regime,
    pub epochs: u64,
    pub batch_size: usize,
    pub schedule: ScheduleConfig,
    /// Schedule of the α network (learnable regime only).
    pub alpha_schedule: ScheduleConfig,
    pub dt_train: f64,
    pub seed: u64,
    /// Updates between test-loss evaluations.
    pub eval_every: u64,
    /// Cap on held-out pairs (or FR query points) in the test loss.
    pub test_pairs: usize,
    /// Query points per batch for the full-rollout regime.
    pub fr_points: usize,
    pub divergence_patience: usize,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.schedule.validate("schedule")?;
        if self.regime == Regime::TiLearnable {
            self.alpha_schedule.validate("alpha_schedule")?;
        }
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        if !(self.dt_train > 0.0 && self.dt_train.is_finite()) {
            return Err(Error::Config(format!("dt_train must be positive, got {}", self.dt_train)));
        }
        if self.eval_every == 0 || self.test_pairs == 0 || self.fr_points == 0 || self.divergence_patience == 0 {
            return Err(Error::Config(
                "eval_every, test_pairs, fr_points and divergence_patience must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Defaults per problem and regime. Desk scale divides epochs by ten.
    pub fn default_for(setup: &ProblemSetup, regime: Regime, paper_scale: bool) -> Self {
        let (schedule, alpha_schedule, epochs, batch_size) = match setup.pde {
            PdeTag::Burgers1d => {
                let s = ScheduleConfig::adam(1e-3, 0.95, 5000);
                let epochs = if regime == Regime::Fr { 200_000 } else { 100_000 };
                (s.clone(), s, epochs, 256)
            }
            PdeTag::Kdv1d => {
                let s = ScheduleConfig::adam(1e-3, 0.95, 5000);
                let epochs = if regime == Regime::TiLearnable { 150_000 } else { 100_000 };
                (s.clone(), s, epochs, 256)
            }
            PdeTag::Ks1d => {
                let s = ScheduleConfig {
                    optimizer: OptimizerKind::AdamW,
                    weight_decay: 1e-4,
                    ..ScheduleConfig::adam(1e-3, 0.95, 5000)
                };
                let epochs = if regime == Regime::TiLearnable { 175_000 } else { 150_000 };
                (s, ScheduleConfig::adam(2e-3, 0.95, 5000), epochs, 128)
            }
            PdeTag::Heat3d => {
                let (epochs, batch) = match regime {
                    Regime::TiLearnable => (200_000, 64),
                    Regime::TiRk4 | Regime::Fr => (150_000, 64),
                    Regime::Ar => (125_000, 32),
                };
                (
                    ScheduleConfig::adam(1e-3, 0.96, 2000),
                    ScheduleConfig::adam(5e-3, 0.96, 2000),
                    epochs,
                    batch,
                )
            }
        };
        Self {
            regime,
            epochs: if paper_scale { epochs } else { epochs / 10 },
            batch_size,
            schedule,
            alpha_schedule,
            dt_train: setup.dt_save,
            seed: 0,
            eval_every: if paper_scale { 1 } else { 100 },
            test_pairs: 1024,
            fr_points: 256,
            divergence_patience: 10,
        }
    }
}

/// The operator network plus, for the learnable regime, the α network.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub deeponet: DeepOnetSpec,
    #[serde(default)]
    pub alpha_net: Option<MlpSpec>,
}

impl ModelSpec {
    pub fn validate(&self, regime: Regime, m: usize, coord_dims: usize) -> Result<()> {
        self.deeponet.validate()?;
        if self.deeponet.branch.input_width() != m {
            return Err(Error::Config(format!(
                "branch input width {} != state width {m}",
                self.deeponet.branch.input_width()
            )));
        }
        let want = if regime == Regime::Fr { coord_dims + 1 } else { coord_dims };
        if self.deeponet.fourier.input_dims() != want {
            return Err(Error::Config(format!(
                "trunk expects {} coordinates, regime {regime} supplies {want}",
                self.deeponet.fourier.input_dims()
            )));
        }
        match (regime, &self.alpha_net) {
            (Regime::TiLearnable, None) => {
                return Err(Error::Config("the learnable regime needs an alpha_net".into()))
            }
            (Regime::TiLearnable, Some(a)) => {
                a.validate()?;
                if a.input_width() != m || a.output_width() != 4 || a.output_activation != OutputActivation::Softmax {
                    return Err(Error::Config(format!(
                        "alpha_net must map {m} inputs to 4 softmax outputs, got {:?} / {:?}",
                        a.layer_widths, a.output_activation
                    )));
                }
            }
            (_, Some(_)) => return Err(Error::Config(format!("regime {regime} takes no alpha_net"))),
            (_, None) => {}
        }
        Ok(())
    }

    /// Defaults per problem and regime; desk scale halves every width.
    pub fn default_for(setup: &ProblemSetup, regime: Regime, paper_scale: bool) -> Self {
        let m = setup.grid.active_indices().len();
        let half = |w: usize| if paper_scale { w } else { w / 2 };
        let fr = regime == Regime::Fr;
        let stack = |input: usize, hidden: &[usize], out: usize, act: Activation| {
            let mut w = vec![input];
            w.extend(hidden.iter().map(|&h| half(h)));
            w.push(half(out));
            MlpSpec::new(w, act)
        };
        let scales = coordinate_scales(setup, fr);
        let (branch, trunk, fourier, alpha_hidden) = match setup.pde {
            PdeTag::Burgers1d => {
                let (w, p) = if fr { (128, 60) } else { (100, 60) };
                let fourier = FourierFeatureSpec::new(0, scales);
                (
                    stack(m, &[w; 6], p, Activation::Tanh),
                    stack(fourier.encoded_dims(), &[w; 6], p, Activation::Tanh),
                    fourier,
                    [32, 32],
                )
            }
            PdeTag::Kdv1d => {
                let fourier = FourierFeatureSpec::new(0, scales);
                if fr {
                    (
                        stack(m, &[150, 250, 450, 380, 320, 300], 80, Activation::Silu),
                        stack(fourier.encoded_dims(), &[200, 220, 240, 250, 260, 280, 300], 80, Activation::Silu),
                        fourier,
                        [64, 48],
                    )
                } else {
                    (
                        stack(m, &[128; 6], 80, Activation::Tanh),
                        stack(fourier.encoded_dims(), &[128; 6], 80, Activation::Tanh),
                        fourier,
                        [64, 48],
                    )
                }
            }
            PdeTag::Ks1d => {
                let fourier = FourierFeatureSpec::new(10, scales);
                let branch_act = if fr { Activation::Silu } else { Activation::Tanh };
                (
                    stack(m, &[128; 7], 100, branch_act),
                    stack(fourier.encoded_dims(), &[128; 7], 100, Activation::Sine),
                    fourier,
                    [64, 64],
                )
            }
            PdeTag::Heat3d => {
                let fourier = FourierFeatureSpec::new(0, scales);
                (
                    stack(m, &[256, 128], 100, Activation::Gelu),
                    stack(fourier.encoded_dims(), &[128; 4], 100, Activation::Sine),
                    fourier,
                    [32, 32],
                )
            }
        };
        let alpha_net = (regime == Regime::TiLearnable).then(|| {
            let mut w = vec![m];
            w.extend(alpha_hidden.iter().map(|&h| half(h)));
            w.push(4);
            MlpSpec::new(w, Activation::Tanh).with_output(OutputActivation::Softmax)
        });
        Self {
            deeponet: DeepOnetSpec { branch, trunk, fourier },
            alpha_net,
        }
    }
}

/// Coordinate scaling for the trunk. KS feeds raw `(x, t)` to its
/// `sin(πkx)`, `cos(πkx)` features, which then reach far above the lowest
/// periodic modes; the other 1-D problems map one period to `[0, 2)` and FR
/// appends `t / t_train`.
pub fn coordinate_scales(setup: &ProblemSetup, with_time: bool) -> Vec<f64> {
    let raw = setup.pde == PdeTag::Ks1d;
    let mut s = match &setup.grid {
        SpatialGrid::Line(_) if raw => vec![1.0],
        SpatialGrid::Line(g) => vec![0.5 * g.length],
        SpatialGrid::LShape(_) => vec![1.0; 3],
    };
    if with_time {
        s.push(if raw { 1.0 } else { setup.t_train });
    }
    s
}
