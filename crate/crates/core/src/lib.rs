//! Pairwise RGB-D registration.
//!
//! The pipeline turns each RGB-D frame into a feature point cloud, matches the
//! two clouds in feature space with ratio-test weighting, and fits a rigid
//! transform with randomized weighted Procrustes. Cross-view splat rendering
//! and masked consistency losses score an alignment without ground truth, and
//! the evaluation module scores it against ground truth when available.
//!
//! ```no_run
//! use rgbd_reg::pipeline::{register_pair, PipelineConfig};
//! use rgbd_reg::synth::{generate_pair, SceneSpec};
//!
//! let pair = generate_pair(&SceneSpec::room(7, 10.0, 0.2)).unwrap();
//! let outcome = register_pair(&pair.frame0, &pair.frame1, Some(&pair.relative_pose),
//!     &PipelineConfig::default()).unwrap();
//! println!("{:?}", outcome.report);
//! ```

pub mod alignment;
pub mod correspondence;
pub mod descriptor;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod io;
mod par;
pub mod pipeline;
pub mod renderer;
pub mod synth;

pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, ColorImage, DepthMap, RgbdFrame, RigidTransform};
