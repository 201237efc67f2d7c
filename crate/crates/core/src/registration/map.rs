use nalgebra::Vector3;

use crate::tensor_train::{tt_svd, TensorTrain3, TtBuildSpec, TtError};
use crate::volume::{Axis, DenseVolume, Grid, VolumeError};

/// Value and world-frame gradient of a map at the voxel nearest a query.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdfSample {
    pub index: [usize; 3],
    /// World position of the voxel center that was sampled.
    pub center: Vector3<f64>,
    pub value: f64,
    pub gradient: Vector3<f64>,
}

/// A signed distance map sampled with nearest-voxel rounding.
pub trait SdfMap {
    fn grid(&self) -> &Grid;

    fn value_at(&self, idx: [usize; 3]) -> f64;

    fn gradient_at(&self, idx: [usize; 3]) -> Vector3<f64>;

    /// Samples the voxel whose center is nearest to `x`, or `None` when that
    /// voxel lies outside the grid.
    fn sample(&self, x: &Vector3<f64>) -> Option<SdfSample> {
        let idx = self.grid().world_to_index(x)?;
        Some(self.sample_index(idx))
    }

    /// Like [`SdfMap::sample`] but clamps the index into the grid.
    fn sample_clamped(&self, x: &Vector3<f64>) -> SdfSample {
        self.sample_index(self.grid().world_to_index_clamped(x))
    }

    fn sample_index(&self, idx: [usize; 3]) -> SdfSample {
        SdfSample {
            index: idx,
            center: self.grid().index_to_world(idx),
            value: self.value_at(idx),
            gradient: self.gradient_at(idx),
        }
    }
}

/// A TT-compressed SDF together with the TTs of its three partial derivatives.
///
/// The derivative TTs are always produced from the value TT at construction,
/// so they share its dims and ranks and differ from it in exactly one core.
#[derive(Debug, Clone)]
pub struct CompressedSdf {
    value: TensorTrain3,
    gradient: [TensorTrain3; 3],
    grid: Grid,
    truncation: Option<f64>,
}

impl CompressedSdf {
    /// Wraps a value TT and derives its gradient TTs using the grid spacing.
    pub fn new(value: TensorTrain3, grid: Grid, truncation: Option<f64>) -> Result<Self, TtError> {
        if value.dims() != grid.dims() {
            return Err(TtError::ShapeMismatch {
                dims: grid.dims(),
                ranks: value.ranks(),
            });
        }
        let spacing = grid.spacing();
        let gradient = [
            value.derivative(Axis::X, spacing.x)?,
            value.derivative(Axis::Y, spacing.y)?,
            value.derivative(Axis::Z, spacing.z)?,
        ];
        Ok(Self {
            value,
            gradient,
            grid,
            truncation,
        })
    }

    /// Compresses a dense SDF with TT-SVD and derives the gradient TTs.
    pub fn from_volume(
        volume: &DenseVolume,
        spec: &TtBuildSpec,
        truncation: Option<f64>,
    ) -> Result<Self, TtError> {
        let tt = tt_svd(volume, spec)?;
        Self::new(tt, volume.grid().clone(), truncation)
    }

    pub fn value_tt(&self) -> &TensorTrain3 {
        &self.value
    }

    pub fn gradient_tt(&self, axis: Axis) -> &TensorTrain3 {
        &self.gradient[axis.index()]
    }

    pub fn truncation(&self) -> Option<f64> {
        self.truncation
    }

    pub fn ranks(&self) -> [usize; 2] {
        self.value.ranks()
    }

    /// Bytes of the value TT alone.
    pub fn memory_bytes(&self, bytes_per_scalar: usize) -> usize {
        self.value.memory_bytes(bytes_per_scalar)
    }

    /// Bytes of the value TT plus the one modified core per derivative TT.
    pub fn memory_bytes_with_gradients(&self, bytes_per_scalar: usize) -> usize {
        let extra = self.gradient[0].core1().len()
            + self.gradient[1].core2().len()
            + self.gradient[2].core3().len();
        self.value.memory_bytes(bytes_per_scalar) + extra * bytes_per_scalar
    }
}

impl SdfMap for CompressedSdf {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn value_at(&self, idx: [usize; 3]) -> f64 {
        self.value.eval_unchecked(idx)
    }

    fn gradient_at(&self, idx: [usize; 3]) -> Vector3<f64> {
        Vector3::new(
            self.gradient[0].eval_unchecked(idx),
            self.gradient[1].eval_unchecked(idx),
            self.gradient[2].eval_unchecked(idx),
        )
    }
}

/// Uncompressed SDF with precomputed finite-difference gradient volumes.
#[derive(Debug, Clone)]
pub struct DenseSdfMap {
    value: DenseVolume,
    gradient: [DenseVolume; 3],
}

impl DenseSdfMap {
    pub fn new(value: DenseVolume) -> Result<Self, VolumeError> {
        let gradient = [
            value.derivative(Axis::X)?,
            value.derivative(Axis::Y)?,
            value.derivative(Axis::Z)?,
        ];
        Ok(Self { value, gradient })
    }

    pub fn volume(&self) -> &DenseVolume {
        &self.value
    }

    pub fn gradient_volume(&self, axis: Axis) -> &DenseVolume {
        &self.gradient[axis.index()]
    }

    pub fn memory_bytes(&self, bytes_per_scalar: usize) -> usize {
        self.value.values().len() * bytes_per_scalar
    }
}

impl SdfMap for DenseSdfMap {
    fn grid(&self) -> &Grid {
        self.value.grid()
    }

    fn value_at(&self, idx: [usize; 3]) -> f64 {
        self.value.get(idx)
    }

    fn gradient_at(&self, idx: [usize; 3]) -> Vector3<f64> {
        Vector3::new(
            self.gradient[0].get(idx),
            self.gradient[1].get(idx),
            self.gradient[2].get(idx),
        )
    }
}
