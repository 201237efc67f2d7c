//! Experiment drivers: perturbation sweeps over map representations, rank
//! sweeps, and memory tables.
//!
//! Scenes place the ground-truth pose at identity unless built from parts;
//! a run starts from a random offset of the truth and is scored with
//! [`crate::geometry::pose_error`].

pub mod memory;
mod scene;
pub mod stats;
mod sweep;

use thiserror::Error;

use crate::format::FormatError;
use crate::registration::RegistrationError;
use crate::tensor_train::TtError;
use crate::volume::VolumeError;

pub use scene::{Method, Scene, SceneSpec};
pub use sweep::{
    is_success, run_rank_sweep, run_sweep, write_cells_csv, write_rank_csv, write_summary,
    CellResult, MagnitudeSummary, RankPoint, RankSweepReport, RankSweepSpec, SweepReport,
    SweepSpec, RANK_SCHEMA, SWEEP_SCHEMA,
};

/// Success threshold on translation error, in voxels.
pub const SUCCESS_VOXELS: f64 = 3.0;
/// Success threshold on rotation error, in radians.
pub const SUCCESS_ROTATION: f64 = 0.05;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Volume(#[from] VolumeError),
    #[error(transparent)]
    Tt(#[from] TtError),
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Registration(RegistrationError),
    #[error("{0}")]
    Invalid(String),
}
