//! Minimal dense tensor engine for the L3 detector and muscle segmenter.
//!
//! Every layer has an explicit forward and backward pass; there is no tape
//! or graph. Arithmetic is `f64` throughout and single-threaded, so a
//! forward/backward pass is bit-reproducible for a fixed seed.

pub mod error;
pub mod layers;
pub mod ops;
pub mod optim;
pub mod tensor;
pub mod unet;
pub mod weights;

pub use error::{NnError, Result};
pub use layers::{Mode, Param};
pub use optim::{Adam, AdamConfig};
pub use tensor::Tensor;
pub use unet::{build_unet, Head, Model, ModelSpec, HEATMAP_PRIOR_BIAS};
pub use weights::{load_weights, save_weights};
