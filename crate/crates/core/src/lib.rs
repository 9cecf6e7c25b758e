//! Depth completion for transparent objects in RGB-D frames.
//!
//! Depth under a transparency mask is discarded and rebuilt by minimising a sparse
//! linear least-squares energy made of data, smoothness and surface-normal terms, with
//! the normal terms relaxed across predicted occlusion boundaries. The crate also ships
//! an analytic ray-cast scene generator that provides exact ground truth, the
//! evaluation metrics, and heightmap construction for top-down grasp planning.

pub mod camera;
pub mod cli;
pub mod completion;
pub mod error;
pub mod heightmap;
pub mod io;
pub mod metrics;
pub mod raster;
pub mod scene;
pub mod seed;
pub mod synthgen;

pub use camera::{CameraIntrinsics, Vec3};
pub use error::{Error, Result};
pub use raster::{BoundaryClass, BoundaryMap, DepthImage, NormalMap, TransparencyMask};
pub use scene::{Scene, SceneMetadata};
