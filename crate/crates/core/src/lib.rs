//! Distance-map regression segmentation toolkit.
//!
//! Volumetric segmentation recast as regression: masks are transformed into
//! distance maps (O/I/NI/SNI-DM), a small regression network learns the map,
//! and a shape-aware MapDice loss couples the regressed maps with a
//! probability head. The crate bundles the transforms, losses, evaluation
//! metrics, a minimal reverse-mode autodiff engine with 3D convolutions, the
//! two-stage training pipeline on synthetic phantoms, and the `dmseg` CLI.

pub mod dm;
pub mod edt;
pub mod error;
pub mod labeling;
pub mod loss;
pub mod metrics;
pub mod nn;
pub mod phantom;
pub mod pipeline;
pub mod preprocess;
pub mod scalar;
pub mod volume;

pub use error::{Error, Result};
