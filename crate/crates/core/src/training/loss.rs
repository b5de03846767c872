use super::config::Regime;
use super::model::{AlphaNet, Model};
use crate::error::{Error, Result};
use crate::integrators::{euler_step, rk4_step, rk4_weighted_step, RhsField};
use crate::nn::{BoundDeepOnet, DeepOnet};
use crate::tensor::{Graph, ParamStore, Tensor, Var};

/// Teacher-forced one-step pairs, both `[B × m]`.
#[derive(Clone, Debug, PartialEq)]
pub struct PairBatch {
    pub inputs: Tensor,
    pub targets: Tensor,
}

impl PairBatch {
    pub fn new(inputs: Tensor, targets: Tensor) -> Result<Self> {
        if inputs.shape() != targets.shape() || inputs.shape().len() != 2 {
            return Err(Error::shape("pair batch", inputs.shape(), targets.shape()));
        }
        Ok(Self { inputs, targets })
    }
}

/// ICs `[B × m]`, shared space-time queries `[Q × (d+1)]`, targets `[B × Q]`.
#[derive(Clone, Debug, PartialEq)]
pub struct FrBatch {
    pub ics: Tensor,
    pub queries: Tensor,
    pub targets: Tensor,
}

impl FrBatch {
    pub fn new(ics: Tensor, queries: Tensor, targets: Tensor) -> Result<Self> {
        if targets.shape() != [ics.rows(), queries.rows()] {
            return Err(Error::shape("FR targets", targets.shape(), &[ics.rows(), queries.rows()]));
        }
        Ok(Self { ics, queries, targets })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Batch {
    Pairs(PairBatch),
    Fr(FrBatch),
}

impl Batch {
    pub fn len(&self) -> usize {
        match self {
            Batch::Pairs(p) => p.inputs.rows(),
            Batch::Fr(f) => f.ics.rows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Autonomous right-hand side backed by a bound DeepONet.
pub struct OperatorRhs<'a>(pub &'a BoundDeepOnet);

impl RhsField for OperatorRhs<'_> {
    fn eval(&self, g: &mut Graph, _t: f64, u: Var) -> Result<Var> {
        self.0.apply(g, u)
    }
}

/// One RK4 step (weighted when `alpha` is given) with the operator as `∂u/∂t`.
pub fn ti_predict(
    net: &DeepOnet,
    alpha: Option<&AlphaNet>,
    store: &ParamStore,
    g: &mut Graph,
    u: Var,
    dt: f64,
) -> Result<Var> {
    let bound = net.bind_on_sensors(g, store)?;
    let rhs = OperatorRhs(&bound);
    match alpha {
        None => rk4_step(&rhs, g, 0.0, u, dt).map(|(next, _)| next),
        Some(a) => {
            let w = a.forward(g, store, u)?;
            rk4_weighted_step(&rhs, g, 0.0, u, dt, w)
        }
    }
}

/// Mean squared one-step error of the time-integrated operator.
pub fn one_step_ti_loss(
    net: &DeepOnet,
    alpha: Option<&AlphaNet>,
    store: &ParamStore,
    g: &mut Graph,
    batch: &PairBatch,
    dt: f64,
) -> Result<Var> {
    let u = g.constant(batch.inputs.clone());
    let target = g.constant(batch.targets.clone());
    let pred = ti_predict(net, alpha, store, g, u, dt)?;
    g.mse(pred, target)
}

/// One-step RK4 loss for an arbitrary right-hand side.
pub fn one_step_rhs_loss(rhs: &dyn RhsField, g: &mut Graph, batch: &PairBatch, dt: f64) -> Result<Var> {
    let u = g.constant(batch.inputs.clone());
    let target = g.constant(batch.targets.clone());
    let (pred, _) = rk4_step(rhs, g, 0.0, u, dt)?;
    g.mse(pred, target)
}

/// Same as [`one_step_ti_loss`] with forward Euler in place of RK4.
pub fn one_step_euler_loss(net: &DeepOnet, store: &ParamStore, g: &mut Graph, batch: &PairBatch, dt: f64) -> Result<Var> {
    let u = g.constant(batch.inputs.clone());
    let target = g.constant(batch.targets.clone());
    let bound = net.bind_on_sensors(g, store)?;
    let pred = euler_step(&OperatorRhs(&bound), g, 0.0, u, dt)?;
    g.mse(pred, target)
}

/// Mean squared error of the direct state-to-next-state map.
pub fn one_step_ar_loss(net: &DeepOnet, store: &ParamStore, g: &mut Graph, batch: &PairBatch) -> Result<Var> {
    let u = g.constant(batch.inputs.clone());
    let target = g.constant(batch.targets.clone());
    let bound = net.bind_on_sensors(g, store)?;
    let pred = bound.apply(g, u)?;
    g.mse(pred, target)
}

/// Mean squared error over every (IC, query) combination.
pub fn fr_loss(net: &DeepOnet, store: &ParamStore, g: &mut Graph, batch: &FrBatch) -> Result<Var> {
    let bound = net.bind(g, store, &batch.queries)?;
    let ics = g.constant(batch.ics.clone());
    let target = g.constant(batch.targets.clone());
    let pred = bound.apply(g, ics)?;
    g.mse(pred, target)
}

impl Model {
    /// Fixed divisor of the squared residual: the typical output change per
    /// sample (`dt · rate scale` for TI, the state scale otherwise), so the
    /// optimizer sees O(1) residuals whatever the physical amplitude.
    pub fn loss_scale(&self) -> f64 {
        let s = self.net.norm.output_scale;
        if self.regime.is_ti() {
            s * self.dt_train
        } else {
            s
        }
    }

    /// The regime's training loss on `batch`, in units of [`Model::loss_scale`].
    pub fn loss(&self, store: &ParamStore, g: &mut Graph, batch: &Batch) -> Result<Var> {
        let raw = self.raw_loss(store, g, batch)?;
        let s = self.loss_scale();
        Ok(g.scale(raw, 1.0 / (s * s)))
    }

    /// Plain mean squared error in physical units.
    pub fn raw_loss(&self, store: &ParamStore, g: &mut Graph, batch: &Batch) -> Result<Var> {
        match (self.regime, batch) {
            (Regime::Fr, Batch::Fr(b)) => fr_loss(&self.net, store, g, b),
            (Regime::Ar, Batch::Pairs(b)) => one_step_ar_loss(&self.net, store, g, b),
            (Regime::TiRk4, Batch::Pairs(b)) => one_step_ti_loss(&self.net, None, store, g, b, self.dt_train),
            (Regime::TiLearnable, Batch::Pairs(b)) => {
                one_step_ti_loss(&self.net, self.alpha.as_ref(), store, g, b, self.dt_train)
            }
            (r, _) => Err(Error::contract(format!("batch layout does not fit regime {r}"))),
        }
    }
}
