//! Layer primitives, backpropagation and optimization.

mod activation;
mod adam;
mod batchnorm;
mod dense;
pub mod gradcheck;
mod layer;
mod noise;
mod sequential;

pub use activation::{softmax_rows, Activation};
pub use adam::{AdamConfig, AdamState};
pub use batchnorm::{BatchNorm, BatchNormCache, DEFAULT_EPSILON, DEFAULT_MOMENTUM};
pub use dense::{Dense, DenseCache};
pub use gradcheck::{grad_check, GradCheckReport, Parameterized};
pub use layer::{Layer, LayerCache, Mode};
pub use noise::{gaussian_sd_for_rate, NoiseCache, NoiseKind, NoiseLayer};
pub use sequential::Sequential;
