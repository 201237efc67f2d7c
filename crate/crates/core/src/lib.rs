//! Tensor Train compression of voxel signed distance fields and rigid
//! point-cloud-to-SDF registration directly on the compressed cores.
//!
//! - [`tensor_train`]: TT-SVD, O(R²) element access, finite-difference
//!   derivative TTs, the `TT3F` container.
//! - [`volume`]: dense grids, EDT-based SDF construction, truncation,
//!   analytic fixtures, the `VOL3` container.
//! - [`geometry`]: SE(3) exponential, retraction, pose metrics.
//! - [`registration`]: Gauss-Newton on SE(3) over dense or compressed maps.
//! - [`pipeline`]: perturbation and rank sweeps, memory accounting.

pub mod cloud;
pub mod format;
pub mod geometry;
pub mod pipeline;
pub mod registration;
pub mod tensor_train;
pub mod volume;

pub use cloud::PointCloud;
pub use format::FormatError;
pub use geometry::{exp_se3, pose_error, retract, Pose, PoseError, Twist};
pub use registration::{
    register, register_dense, CompressedSdf, DenseSdfMap, RegistrationConfig, RegistrationResult,
};
pub use tensor_train::{tt_svd, TensorTrain3, TtBuildSpec};
pub use volume::{Axis, DenseVolume, Grid, OccupancyGrid, Shape};
