use serde::{Deserialize, Serialize};

use super::fourier::{fourier_encode, FourierFeatureSpec};
use super::mlp::{BoundMlp, Mlp, MlpSpec};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeepOnetSpec {
    pub branch: MlpSpec,
    pub trunk: MlpSpec,
    pub fourier: FourierFeatureSpec,
}

impl DeepOnetSpec {
    pub fn latent_p(&self) -> usize {
        self.branch.output_width()
    }

    pub fn validate(&self) -> Result<()> {
        self.branch.validate()?;
        self.trunk.validate()?;
        if self.branch.output_width() != self.trunk.output_width() {
            return Err(Error::Config(format!(
                "branch output width {} != trunk output width {}",
                self.branch.output_width(),
                self.trunk.output_width()
            )));
        }
        if self.trunk.input_width() != self.fourier.encoded_dims() {
            return Err(Error::Config(format!(
                "trunk input width {} != encoded coordinate width {}",
                self.trunk.input_width(),
                self.fourier.encoded_dims()
            )));
        }
        Ok(())
    }
}

/// Fixed affine maps around the network: branch inputs are fed as
/// `(u − input_shift) / input_scale` and the inner product is mapped to
/// `output_scale · z + output_shift`. Set once from training data, never trained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub input_shift: f64,
    pub input_scale: f64,
    pub output_scale: f64,
    #[serde(default)]
    pub output_shift: f64,
}

impl Default for Normalization {
    fn default() -> Self {
        Self {
            input_shift: 0.0,
            input_scale: 1.0,
            output_scale: 1.0,
            output_shift: 0.0,
        }
    }
}

/// Branch MLP over the state at `m` fixed sensors, trunk MLP over encoded
/// query coordinates, combined by an inner product over the latent width.
#[derive(Clone, Debug)]
pub struct DeepOnet {
    pub spec: DeepOnetSpec,
    pub norm: Normalization,
    /// `m × d` sensor coordinates. When `d` matches the trunk's coordinate
    /// width they double as the default query set.
    pub sensors: Tensor,
    branch: Mlp,
    trunk: Mlp,
}

/// A [`DeepOnet`] bound into a graph with its trunk already evaluated at a
/// fixed query set, so repeated branch evaluations share one trunk pass.
#[derive(Clone, Debug)]
pub struct BoundDeepOnet {
    branch: BoundMlp,
    trunk_out: Var,
    norm: Normalization,
    sensors: usize,
}

impl DeepOnet {
    pub fn init(
        spec: &DeepOnetSpec,
        sensors: Tensor,
        seed: u64,
        store: &mut ParamStore,
        prefix: &str,
    ) -> Result<Self> {
        spec.validate()?;
        Self::check_sensors(spec, &sensors)?;
        let branch = Mlp::init(&spec.branch, derive_seed(seed, "branch"), store, &format!("{prefix}.branch"))?;
        let trunk = Mlp::init(&spec.trunk, derive_seed(seed, "trunk"), store, &format!("{prefix}.trunk"))?;
        Ok(Self {
            spec: spec.clone(),
            norm: Normalization::default(),
            sensors,
            branch,
            trunk,
        })
    }

    pub fn attach(
        spec: &DeepOnetSpec,
        sensors: Tensor,
        norm: Normalization,
        store: &ParamStore,
        prefix: &str,
    ) -> Result<Self> {
        spec.validate()?;
        Self::check_sensors(spec, &sensors)?;
        Ok(Self {
            spec: spec.clone(),
            norm,
            sensors,
            branch: Mlp::attach(&spec.branch, store, &format!("{prefix}.branch"))?,
            trunk: Mlp::attach(&spec.trunk, store, &format!("{prefix}.trunk"))?,
        })
    }

    fn check_sensors(spec: &DeepOnetSpec, sensors: &Tensor) -> Result<()> {
        if sensors.shape().len() != 2 || sensors.rows() != spec.branch.input_width() {
            return Err(Error::Config(format!(
                "sensor grid {:?} does not match branch input width {}",
                sensors.shape(),
                spec.branch.input_width()
            )));
        }
        Ok(())
    }

    pub fn num_sensors(&self) -> usize {
        self.sensors.rows()
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        let mut ids = self.branch.param_ids();
        ids.extend(self.trunk.param_ids());
        ids
    }

    pub fn branch_mlp(&self) -> &Mlp {
        &self.branch
    }

    /// Binds parameters and evaluates the trunk at `queries` (physical coordinates).
    pub fn bind(&self, g: &mut Graph, store: &ParamStore, queries: &Tensor) -> Result<BoundDeepOnet> {
        let enc = fourier_encode(queries, &self.spec.fourier)?;
        let trunk = self.trunk.bind(g, store);
        let enc = g.constant(enc);
        let trunk_out = trunk.forward(g, enc)?;
        Ok(BoundDeepOnet {
            branch: self.branch.bind(g, store),
            trunk_out,
            norm: self.norm.clone(),
            sensors: self.num_sensors(),
        })
    }

    /// Unrecorded trunk evaluation, `[n_queries × p]`.
    pub fn trunk_eval(&self, store: &ParamStore, queries: &Tensor) -> Result<Tensor> {
        let enc = fourier_encode(queries, &self.spec.fourier)?;
        self.trunk.eval(store, &enc)
    }

    /// Binds the branch only; the trunk enters as a precomputed constant
    /// from [`DeepOnet::trunk_eval`].
    pub fn bind_with_trunk(&self, g: &mut Graph, store: &ParamStore, trunk: &Tensor) -> Result<BoundDeepOnet> {
        if trunk.shape().len() != 2 || trunk.cols() != self.spec.latent_p() {
            return Err(Error::shape("precomputed trunk", trunk.shape(), &[self.spec.latent_p()]));
        }
        Ok(BoundDeepOnet {
            branch: self.branch.bind(g, store),
            trunk_out: g.constant(trunk.clone()),
            norm: self.norm.clone(),
            sensors: self.num_sensors(),
        })
    }

    /// Binds with the sensor grid as the query set (state → field on the same grid).
    pub fn bind_on_sensors(&self, g: &mut Graph, store: &ParamStore) -> Result<BoundDeepOnet> {
        self.bind(g, store, &self.sensors)
    }

    /// Unrecorded evaluation on `[B × m]` states at arbitrary queries.
    pub fn eval(&self, store: &ParamStore, states: &Tensor, queries: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, store, queries)?;
        let s = g.constant(states.clone());
        let out = bound.apply(&mut g, s)?;
        Ok(g.value(out).clone())
    }
}

impl BoundDeepOnet {
    /// `out[b, j] = output_scale · Σ_i branch(states[b])_i · trunk(query_j)_i + output_shift`
    pub fn apply(&self, g: &mut Graph, states: Var) -> Result<Var> {
        if g.value(states).cols() != self.sensors {
            return Err(Error::shape("deeponet states", g.shape(states), &[self.sensors]));
        }
        let mut x = states;
        if self.norm.input_shift != 0.0 {
            let shift = g.constant(Tensor::scalar(self.norm.input_shift));
            x = g.sub(x, shift)?;
        }
        if self.norm.input_scale != 1.0 {
            x = g.scale(x, 1.0 / self.norm.input_scale);
        }
        let br = self.branch.forward(g, x)?;
        let mut out = g.matmul_nt(br, self.trunk_out)?;
        if self.norm.output_scale != 1.0 {
            out = g.scale(out, self.norm.output_scale);
        }
        if self.norm.output_shift != 0.0 {
            let shift = g.constant(Tensor::scalar(self.norm.output_shift));
            out = g.add(out, shift)?;
        }
        Ok(out)
    }

    pub fn trunk_output(&self) -> Var {
        self.trunk_out
    }
}

/// Records `deeponet(states)(queries)` on `g`: `[B × m]` states to `[B × n]`.
pub fn deeponet_forward(
    model: &DeepOnet,
    store: &ParamStore,
    g: &mut Graph,
    states: Var,
    queries: &Tensor,
) -> Result<Var> {
    let bound = model.bind(g, store, queries)?;
    bound.apply(g, states)
}
