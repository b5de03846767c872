use serde::{Deserialize, Serialize};

use super::config::{ModelSpec, Regime};
use crate::error::{Error, Result};
use crate::nn::{DeepOnet, Mlp, Normalization};
use crate::pde::ProblemSetup;
use crate::rng::derive_seed;
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

pub const DEEPONET_PREFIX: &str = "don";
pub const ALPHA_PREFIX: &str = "alpha";

/// Affine input map shared by the α network and the branch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputNorm {
    pub shift: f64,
    pub scale: f64,
}

impl From<&Normalization> for InputNorm {
    fn from(n: &Normalization) -> Self {
        Self {
            shift: n.input_shift,
            scale: n.input_scale,
        }
    }
}

/// `α = NN_RK(u)`: one softmax row of four stage weights per state.
#[derive(Clone, Debug)]
pub struct AlphaNet {
    pub mlp: Mlp,
    pub norm: InputNorm,
}

impl AlphaNet {
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, u: Var) -> Result<Var> {
        let bound = self.mlp.bind(g, store);
        let mut x = u;
        if self.norm.shift != 0.0 {
            let s = g.constant(Tensor::scalar(self.norm.shift));
            x = g.sub(x, s)?;
        }
        if self.norm.scale != 1.0 {
            x = g.scale(x, 1.0 / self.norm.scale);
        }
        bound.forward(g, x)
    }

    /// `[B × m]` states to `[B × 4]` weights, unrecorded.
    pub fn eval(&self, store: &ParamStore, states: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let u = g.constant(states.clone());
        let a = self.forward(&mut g, store, u)?;
        Ok(g.value(a).clone())
    }
}

/// Network structure for one regime on one problem. Parameters live in a
/// separate [`ParamStore`] so the same model can be evaluated against the
/// current or the best parameter set.
#[derive(Clone, Debug)]
pub struct Model {
    pub regime: Regime,
    pub spec: ModelSpec,
    pub setup: ProblemSetup,
    pub dt_train: f64,
    pub net: DeepOnet,
    pub alpha: Option<AlphaNet>,
    state_indices: Vec<usize>,
}

impl Model {
    pub fn init(
        regime: Regime,
        spec: &ModelSpec,
        setup: &ProblemSetup,
        norm: Normalization,
        dt_train: f64,
        seed: u64,
        store: &mut ParamStore,
    ) -> Result<Self> {
        let sensors = setup.grid.active_coords();
        spec.validate(regime, sensors.rows(), sensors.cols())?;
        let init = derive_seed(seed, "init");
        let mut net = DeepOnet::init(&spec.deeponet, sensors, init, store, DEEPONET_PREFIX)?;
        net.norm = norm;
        let alpha = match &spec.alpha_net {
            Some(a) => Some(AlphaNet {
                mlp: Mlp::init(a, derive_seed(init, ALPHA_PREFIX), store, ALPHA_PREFIX)?,
                norm: InputNorm::from(&net.norm),
            }),
            None => None,
        };
        Ok(Self::assemble(regime, spec, setup, dt_train, net, alpha))
    }

    /// Rebuilds the structure over parameters already in `store`.
    pub fn attach(
        regime: Regime,
        spec: &ModelSpec,
        setup: &ProblemSetup,
        norm: Normalization,
        dt_train: f64,
        store: &ParamStore,
    ) -> Result<Self> {
        let sensors = setup.grid.active_coords();
        spec.validate(regime, sensors.rows(), sensors.cols())?;
        let alpha = match &spec.alpha_net {
            Some(a) => Some(AlphaNet {
                mlp: Mlp::attach(a, store, ALPHA_PREFIX)?,
                norm: InputNorm::from(&norm),
            }),
            None => None,
        };
        let net = DeepOnet::attach(&spec.deeponet, sensors, norm, store, DEEPONET_PREFIX)?;
        Ok(Self::assemble(regime, spec, setup, dt_train, net, alpha))
    }

    fn assemble(
        regime: Regime,
        spec: &ModelSpec,
        setup: &ProblemSetup,
        dt_train: f64,
        net: DeepOnet,
        alpha: Option<AlphaNet>,
    ) -> Self {
        Self {
            regime,
            spec: spec.clone(),
            setup: setup.clone(),
            dt_train,
            net,
            alpha,
            state_indices: setup.grid.active_indices(),
        }
    }

    /// Degrees of freedom per state.
    pub fn state_width(&self) -> usize {
        self.state_indices.len()
    }

    pub fn state_indices(&self) -> &[usize] {
        &self.state_indices
    }

    /// Restricts a stored frame to the model's degrees of freedom.
    pub fn project(&self, frame: &[f64]) -> Vec<f64> {
        self.state_indices.iter().map(|&i| frame[i]).collect()
    }

    pub fn main_param_ids(&self) -> Vec<ParamId> {
        self.net.param_ids()
    }

    pub fn alpha_param_ids(&self) -> Vec<ParamId> {
        self.alpha.as_ref().map(|a| a.mlp.param_ids()).unwrap_or_default()
    }

    /// Space-time queries `(x…, t)` for every sensor at every listed time,
    /// time-major: row `n·m + j` is sensor `j` at `times[n]`.
    pub fn spacetime_queries(&self, times: &[f64]) -> Result<Tensor> {
        if self.regime != Regime::Fr {
            return Err(Error::Config(format!("regime {} takes no space-time queries", self.regime)));
        }
        let s = &self.net.sensors;
        let (m, d) = (s.rows(), s.cols());
        let mut data = Vec::with_capacity(times.len() * m * (d + 1));
        for &t in times {
            for j in 0..m {
                data.extend_from_slice(s.row(j));
                data.push(t);
            }
        }
        Tensor::matrix(times.len() * m, d + 1, data)
    }
}
