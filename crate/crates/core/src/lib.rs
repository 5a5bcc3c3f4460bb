//! Depth-dependent multi-projector pattern generation.
//!
//! Several projectors light a set of surfaces; each surface should show its own
//! target image. Calibration recovers projector–camera correspondences and
//! projector responses, the correspondences give a sparse linear system from
//! pattern pixels to image pixels, and the system splits into small independent
//! chains along epipolar lines that are solved with box constraints.

// `!(x > 0.0)` is used on purpose so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod calib;
pub mod demo;
pub mod error;
pub mod pipeline;
pub mod procedural;
pub mod raster;
pub mod render;
pub mod scene;
pub mod solver;
pub mod system;

#[cfg(test)]
pub(crate) mod test_support;

pub use calib::{CorrespondenceMap, GammaModel};
pub use demo::{make_demo_scene, DemoKind, DemoParams};
pub use error::{Error, Result};
pub use pipeline::{run_pipeline, Method, RunConfig, RunReport};
pub use raster::Raster;
pub use render::{QualityReport, RecombinedImage};
pub use scene::{ProjectorModel, SceneDescription, SurfaceModel, VirtualCamera};
pub use solver::{EpipolarChain, SolverBounds};
pub use system::{Convention, PatternImage, SparseSystem, TargetImage};
