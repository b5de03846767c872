use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, ParamId, ParamStore, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sine,
    Gelu,
    Silu,
    Relu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutputActivation {
    #[default]
    Identity,
    Softmax,
}

/// Layer widths run from input to output; the activation is applied to every
/// hidden layer and `output_activation` to the last.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub layer_widths: Vec<usize>,
    pub activation: Activation,
    #[serde(default)]
    pub output_activation: OutputActivation,
}

impl MlpSpec {
    pub fn new(layer_widths: Vec<usize>, activation: Activation) -> Self {
        Self {
            layer_widths,
            activation,
            output_activation: OutputActivation::Identity,
        }
    }

    /// `input`, then `depth` hidden layers of `width`, then `output`.
    pub fn uniform(input: usize, width: usize, depth: usize, output: usize, activation: Activation) -> Self {
        let mut w = vec![input];
        w.extend(std::iter::repeat(width).take(depth));
        w.push(output);
        Self::new(w, activation)
    }

    pub fn with_output(mut self, out: OutputActivation) -> Self {
        self.output_activation = out;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_widths.len() < 2 {
            return Err(Error::Config(format!(
                "an MLP needs at least input and output widths, got {:?}",
                self.layer_widths
            )));
        }
        if self.layer_widths.iter().any(|&w| w == 0) {
            return Err(Error::Config(format!("zero layer width in {:?}", self.layer_widths)));
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.layer_widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.layer_widths.last().unwrap()
    }

    pub fn num_scalars(&self) -> usize {
        self.layer_widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

#[derive(Clone, Debug)]
pub struct Mlp {
    pub spec: MlpSpec,
    layers: Vec<(ParamId, ParamId)>,
}

/// An [`Mlp`] whose parameters have been bound into a particular graph.
#[derive(Clone, Debug)]
pub struct BoundMlp {
    spec: MlpSpec,
    layers: Vec<(Var, Var)>,
}

impl Mlp {
    /// Glorot-uniform weights, zero biases, registered as `{prefix}.layer{i}.weight|bias`.
    pub fn init(spec: &MlpSpec, seed: u64, store: &mut ParamStore, prefix: &str) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut layers = Vec::with_capacity(spec.layer_widths.len() - 1);
        for (i, w) in spec.layer_widths.windows(2).enumerate() {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let weight = Tensor::from_fn(&[fan_in, fan_out], |_| rng.gen_range(-bound..bound));
            let wid = store.add(format!("{prefix}.layer{i}.weight"), weight)?;
            let bid = store.add(format!("{prefix}.layer{i}.bias"), Tensor::zeros(&[fan_out]))?;
            layers.push((wid, bid));
        }
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    /// Re-attaches to parameters already present in `store` (e.g. after loading).
    pub fn attach(spec: &MlpSpec, store: &ParamStore, prefix: &str) -> Result<Self> {
        spec.validate()?;
        let mut layers = Vec::new();
        for (i, w) in spec.layer_widths.windows(2).enumerate() {
            let get = |suffix: &str, shape: &[usize]| -> Result<ParamId> {
                let name = format!("{prefix}.layer{i}.{suffix}");
                let id = store
                    .id(&name)
                    .ok_or_else(|| Error::Checkpoint(format!("missing parameter `{name}`")))?;
                if store.get(id).value.shape() != shape {
                    return Err(Error::Checkpoint(format!(
                        "parameter `{name}` has shape {:?}, spec wants {shape:?}",
                        store.get(id).value.shape()
                    )));
                }
                Ok(id)
            };
            layers.push((get("weight", &[w[0], w[1]])?, get("bias", &[w[1]])?));
        }
        Ok(Self {
            spec: spec.clone(),
            layers,
        })
    }

    pub fn param_ids(&self) -> Vec<ParamId> {
        self.layers.iter().flat_map(|&(w, b)| [w, b]).collect()
    }

    pub fn bind(&self, g: &mut Graph, store: &ParamStore) -> BoundMlp {
        BoundMlp {
            spec: self.spec.clone(),
            layers: self
                .layers
                .iter()
                .map(|&(w, b)| (g.param(store, w), g.param(store, b)))
                .collect(),
        }
    }

    /// Unrecorded forward pass.
    pub fn eval(&self, store: &ParamStore, x: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let bound = self.bind(&mut g, store);
        let xv = g.constant(x.clone());
        let y = bound.forward(&mut g, xv)?;
        Ok(g.value(y).clone())
    }
}

impl BoundMlp {
    pub fn forward(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let in_w = self.spec.input_width();
        if g.value(x).cols() != in_w {
            return Err(Error::shape("mlp input", g.shape(x), &[in_w]));
        }
        let last = self.layers.len() - 1;
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            let z = g.matmul(h, w)?;
            let z = g.add(z, b)?;
            h = if i < last {
                match self.spec.activation {
                    Activation::Tanh => g.tanh(z),
                    Activation::Sine => g.sin(z),
                    Activation::Gelu => g.gelu(z),
                    Activation::Silu => g.silu(z),
                    Activation::Relu => g.relu(z),
                }
            } else {
                match self.spec.output_activation {
                    OutputActivation::Identity => z,
                    OutputActivation::Softmax => g.softmax(z),
                }
            };
        }
        Ok(h)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count_and_names() {
        let spec = MlpSpec::new(vec![2, 3, 1], Activation::Tanh);
        let mut store = ParamStore::new();
        Mlp::init(&spec, 0, &mut store, "net").unwrap();
        assert_eq!(store.num_scalars(), 13);
        assert_eq!(spec.num_scalars(), 13);
        assert!(store.by_name("net.layer1.bias").is_some());
    }

    #[test]
    fn same_seed_same_weights() {
        let spec = MlpSpec::uniform(4, 8, 2, 3, Activation::Gelu);
        let (mut a, mut b) = (ParamStore::new(), ParamStore::new());
        Mlp::init(&spec, 42, &mut a, "n").unwrap();
        Mlp::init(&spec, 42, &mut b, "n").unwrap();
        for ((_, p), (_, q)) in a.iter().zip(b.iter()) {
            let bits = |t: &Tensor| t.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&p.value), bits(&q.value));
        }
    }

    #[test]
    fn glorot_moments() {
        // Uniform(-b, b) has standard deviation b/sqrt(3).
        let spec = MlpSpec::new(vec![128, 128], Activation::Tanh);
        let mut store = ParamStore::new();
        Mlp::init(&spec, 3, &mut store, "n").unwrap();
        let w = &store.by_name("n.layer0.weight").unwrap().value;
        let n = w.numel() as f64;
        let mean = w.data().iter().sum::<f64>() / n;
        let sd = (w.data().iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        let target = (6.0_f64 / 256.0).sqrt() / 3.0_f64.sqrt();
        assert!((sd - target).abs() < 0.2 * target, "sd {sd} target {target}");
        let bound = (6.0_f64 / 256.0).sqrt();
        assert!(w.max_abs() <= bound);
    }

    #[test]
    fn invalid_specs() {
        assert!(MlpSpec::new(vec![3], Activation::Tanh).validate().is_err());
        assert!(MlpSpec::new(vec![3, 0, 1], Activation::Tanh).validate().is_err());
    }

    #[test]
    fn softmax_head_rows_sum_to_one() {
        let spec = MlpSpec::uniform(5, 7, 2, 4, Activation::Tanh).with_output(OutputActivation::Softmax);
        let mut store = ParamStore::new();
        let mlp = Mlp::init(&spec, 1, &mut store, "alpha").unwrap();
        let x = Tensor::from_fn(&[6, 5], |i| (i as f64 * 0.37).sin() * 50.0);
        let y = mlp.eval(&store, &x).unwrap();
        for r in 0..6 {
            let s: f64 = y.row(r).iter().sum();
            assert!((s - 1.0).abs() < 1e-12);
            assert!(y.row(r).iter().all(|&a| a > 0.0 && a < 1.0));
        }
    }
}
