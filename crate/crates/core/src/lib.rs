//! Time-integrator-embedded deep operator networks.
//!
//! The crate is layered bottom-up:
//!
//! * [`tensor`]: `f64` tensors with a reverse-mode computation record
//! * [`nn`]: MLPs, Fourier coordinate features and the DeepONet composition
//! * [`integrators`]: one-step advance rules (RK4, weighted RK4, AB2/AM3,
//!   midpoint, Euler) usable inside a differentiable loss or a rollout
//! * [`pde`]: reference solvers and initial-condition samplers that build
//!   the benchmark trajectory datasets
//! * [`training`]: losses, Adam/AdamW, schedules, the four training regimes
//!   and checkpoints
//! * [`eval`]: rollouts, relative L2 metrics, extrapolation summaries,
//!   α histograms and multi-trial aggregation

pub mod error;
pub mod eval;
pub mod integrators;
pub mod nn;
pub mod pde;
pub mod rng;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use tensor::Tensor;
