//! CT volume handling, projections, synthetic phantoms, augmentation, and
//! the two-stage L3 detection / muscle segmentation pipeline with its
//! evaluation statistics.

pub mod augment;
pub mod config;
pub mod detection;
pub mod error;
pub mod evaluate;
pub mod image;
pub mod metrics;
pub mod pgm;
pub mod phantom;
pub mod projection;
pub mod record;
pub mod report;
pub mod rng;
pub mod segmentation;
pub mod training;
pub mod volume;

pub use error::{CoreError, Result};
