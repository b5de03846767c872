//! Network building blocks: MLPs, Fourier coordinate features and the
//! branch–trunk DeepONet composition.

mod deeponet;
mod fourier;
mod mlp;

pub use deeponet::{deeponet_forward, BoundDeepOnet, DeepOnet, DeepOnetSpec, Normalization};
pub use fourier::{fourier_encode, FourierFeatureSpec};
pub use mlp::{Activation, BoundMlp, Mlp, MlpSpec, OutputActivation};
