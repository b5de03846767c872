//! One-step time-advance rules over an abstract right-hand side.
//!
//! Steppers record onto a [`Graph`](crate::tensor::Graph), so the same code
//! backs differentiable one-step losses and detached inference rollouts.

mod order;
mod rollout;
mod steppers;

pub use order::{estimate_convergence_order, KnownSolution, OrderEstimate, ERROR_FLOOR};
pub use rollout::{rollout, BlowupInfo, IntegratorKind, Rollout, Scheme, BLOWUP_THRESHOLD};
pub use steppers::{
    ab2am3_step, euler_step, midpoint_step, rk4_step, rk4_weighted_step, AlphaProvider, RhsField,
    StageSlopes, StepHistory, RK4_WEIGHTS,
};
