//! Dense voxel grids with a world-coordinate mapping.
//!
//! Grids are cell-centered: `origin` is the world position of the center of
//! voxel `(0, 0, 0)` and voxel `(i, j, k)` sits at `origin + (i, j, k) * spacing`.
//! Values are stored row-major with the last axis fastest, i.e. the linear
//! index of `(i, j, k)` is `(i * N2 + j) * N3 + k`.

mod analytic;
mod edt;
pub mod io;
mod sampling;

pub use analytic::{analytic_sdf, Shape};
pub use edt::sdf_from_occupancy;
pub use sampling::{sample_surface_points, SdfSource};

use nalgebra::Vector3;
use thiserror::Error;

use crate::tensor_train::DiffMatrix;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VolumeError {
    #[error("grid dimensions must be positive, got {0:?}")]
    EmptyDims([usize; 3]),
    #[error("grid spacing must be positive and finite, got {0:?}")]
    BadSpacing([f64; 3]),
    #[error("grid origin must be finite")]
    BadOrigin,
    #[error("expected {expected} values for the grid, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },
    #[error("volume contains a non-finite value at linear index {0}")]
    NonFinite(usize),
    #[error("truncation distance must be positive, got {0}")]
    BadTruncation(f64),
    #[error("occupancy grid must contain both occupied and free voxels")]
    TrivialOccupancy,
    #[error("degenerate shape: {0}")]
    DegenerateShape(String),
    #[error("shape does not fit inside the grid bounds")]
    ShapeOutOfBounds,
    #[error("surface not found: only {found} of {requested} points after {attempts} attempts")]
    SurfaceNotFound { found: usize, requested: usize, attempts: usize },
    #[error("axis {axis} has {len} samples, need at least 3 for finite differences")]
    AxisTooShort { axis: usize, len: usize },
}

/// Spatial axis of a 3D grid. `X` is the slowest-varying storage axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub fn index(self) -> usize {
        match self {
            Axis::X => 0,
            Axis::Y => 1,
            Axis::Z => 2,
        }
    }

    /// Maps a zero-based axis number to an [`Axis`].
    pub fn from_index(index: usize) -> Option<Axis> {
        Axis::ALL.get(index).copied()
    }
}

/// Geometry of a cell-centered voxel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dims: [usize; 3],
    origin: Vector3<f64>,
    spacing: Vector3<f64>,
}

impl Grid {
    pub fn new(
        dims: [usize; 3],
        origin: Vector3<f64>,
        spacing: Vector3<f64>,
    ) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::EmptyDims(dims));
        }
        if spacing.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return Err(VolumeError::BadSpacing([spacing.x, spacing.y, spacing.z]));
        }
        if origin.iter().any(|v| !v.is_finite()) {
            return Err(VolumeError::BadOrigin);
        }
        Ok(Self {
            dims,
            origin,
            spacing,
        })
    }

    /// Grid whose cells exactly tile the box `[min, max]`.
    pub fn spanning(
        dims: [usize; 3],
        min: Vector3<f64>,
        max: Vector3<f64>,
    ) -> Result<Self, VolumeError> {
        if dims.contains(&0) {
            return Err(VolumeError::EmptyDims(dims));
        }
        let extent = max - min;
        let spacing = Vector3::new(
            extent.x / dims[0] as f64,
            extent.y / dims[1] as f64,
            extent.z / dims[2] as f64,
        );
        Self::new(dims, min + spacing * 0.5, spacing)
    }

    /// Grid tiling the cube `[-half_width, half_width]³`.
    pub fn cube(dims: [usize; 3], half_width: f64) -> Result<Self, VolumeError> {
        let w = Vector3::repeat(half_width);
        Self::spanning(dims, -w, w)
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn spacing(&self) -> Vector3<f64> {
        self.spacing
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn linear_index(&self, idx: [usize; 3]) -> usize {
        (idx[0] * self.dims[1] + idx[1]) * self.dims[2] + idx[2]
    }

    #[inline]
    pub fn unravel(&self, linear: usize) -> [usize; 3] {
        let k = linear % self.dims[2];
        let rest = linear / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], k]
    }

    pub fn index_to_world(&self, idx: [usize; 3]) -> Vector3<f64> {
        Vector3::new(
            self.origin.x + idx[0] as f64 * self.spacing.x,
            self.origin.y + idx[1] as f64 * self.spacing.y,
            self.origin.z + idx[2] as f64 * self.spacing.z,
        )
    }

    /// Continuous (fractional) voxel coordinates of a world point.
    pub fn world_to_continuous(&self, x: &Vector3<f64>) -> Vector3<f64> {
        (x - self.origin).component_div(&self.spacing)
    }

    /// Index of the voxel whose center is nearest to `x`, or `None` when that
    /// center would lie outside the grid.
    pub fn world_to_index(&self, x: &Vector3<f64>) -> Option<[usize; 3]> {
        let c = self.world_to_continuous(x);
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let r = c[a].round();
            if !(r >= 0.0 && r < self.dims[a] as f64) {
                return None;
            }
            idx[a] = r as usize;
        }
        Some(idx)
    }

    /// Nearest voxel index with each coordinate clamped into the grid.
    pub fn world_to_index_clamped(&self, x: &Vector3<f64>) -> [usize; 3] {
        let c = self.world_to_continuous(x);
        let mut idx = [0usize; 3];
        for a in 0..3 {
            let hi = (self.dims[a] - 1) as f64;
            // NaN falls through `clamp` unchanged and then casts to 0.
            idx[a] = c[a].round().clamp(0.0, hi) as usize;
        }
        idx
    }

    /// Centers of the first and last voxels.
    pub fn center_bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        let last = [self.dims[0] - 1, self.dims[1] - 1, self.dims[2] - 1];
        (self.origin, self.index_to_world(last))
    }

    pub fn contains_center_box(&self, x: &Vector3<f64>) -> bool {
        let (lo, hi) = self.center_bounds();
        (0..3).all(|a| x[a] >= lo[a] && x[a] <= hi[a])
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.min()
    }
}

/// An uncompressed cell-centered scalar grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVolume {
    grid: Grid,
    values: Vec<f64>,
}

impl DenseVolume {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, VolumeError> {
        if values.len() != grid.len() {
            return Err(VolumeError::LengthMismatch {
                expected: grid.len(),
                actual: values.len(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(VolumeError::NonFinite(pos));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        let values = vec![0.0; grid.len()];
        Self { grid, values }
    }

    /// Fills a grid by evaluating `f` at every voxel index.
    pub fn from_index_fn(
        grid: Grid,
        mut f: impl FnMut([usize; 3]) -> f64,
    ) -> Result<Self, VolumeError> {
        let values = (0..grid.len()).map(|l| f(grid.unravel(l))).collect();
        Self::new(grid, values)
    }

    /// Fills a grid by evaluating `f` at every voxel center.
    pub fn from_world_fn(
        grid: Grid,
        mut f: impl FnMut(&Vector3<f64>) -> f64,
    ) -> Result<Self, VolumeError> {
        let values = (0..grid.len())
            .map(|l| f(&grid.index_to_world(grid.unravel(l))))
            .collect();
        Self::new(grid, values)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dims(&self) -> [usize; 3] {
        self.grid.dims
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn get(&self, idx: [usize; 3]) -> f64 {
        self.values[self.grid.linear_index(idx)]
    }

    pub fn world_to_index(&self, x: &Vector3<f64>) -> Option<[usize; 3]> {
        self.grid.world_to_index(x)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Frobenius norm of `self - other`. Panics if the grids differ in size.
    pub fn frobenius_distance(&self, other: &DenseVolume) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn max_abs_difference(&self, other: &DenseVolume) -> f64 {
        assert_eq!(self.values.len(), other.values.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<DenseVolume, VolumeError> {
        DenseVolume::new(self.grid.clone(), self.values.iter().map(|&v| f(v)).collect())
    }

    /// Clamps every value into `[-mu, mu]` (the truncated SDF).
    pub fn truncate(&self, mu: f64) -> Result<DenseVolume, VolumeError> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(VolumeError::BadTruncation(mu));
        }
        self.map(|v| {
            if v >= mu {
                mu
            } else if v <= -mu {
                -mu
            } else {
                v
            }
        })
    }

    /// Applies a 1D operator along `axis` to every grid line.
    pub fn apply_along_axis(&self, op: &DiffMatrix, axis: Axis) -> DenseVolume {
        let [n1, n2, n3] = self.grid.dims;
        let a = axis.index();
        assert_eq!(op.len(), self.grid.dims[a], "operator size must match axis length");
        let mut out = vec![0.0; self.values.len()];
        let mut line = vec![0.0; self.grid.dims[a]];
        let mut res = vec![0.0; self.grid.dims[a]];
        // Outer loops run over the two axes orthogonal to `a`.
        let (outer, inner): ((usize, usize), fn(usize, usize, usize) -> [usize; 3]) = match axis {
            Axis::X => ((n2, n3), |p: usize, q: usize, t: usize| [t, p, q]),
            Axis::Y => ((n1, n3), |p: usize, q: usize, t: usize| [p, t, q]),
            Axis::Z => ((n1, n2), |p: usize, q: usize, t: usize| [p, q, t]),
        };
        for p in 0..outer.0 {
            for q in 0..outer.1 {
                for (t, slot) in line.iter_mut().enumerate() {
                    *slot = self.values[self.grid.linear_index(inner(p, q, t))];
                }
                op.apply_into(&line, &mut res);
                for (t, v) in res.iter().enumerate() {
                    out[self.grid.linear_index(inner(p, q, t))] = *v;
                }
            }
        }
        DenseVolume {
            grid: self.grid.clone(),
            values: out,
        }
    }

    /// Central-difference partial derivative along `axis` in world units,
    /// using one-sided second-order stencils on the boundary planes.
    pub fn derivative(&self, axis: Axis) -> Result<DenseVolume, VolumeError> {
        let a = axis.index();
        let n = self.grid.dims[a];
        let op = DiffMatrix::new(n, self.grid.spacing[a])
            .map_err(|_| VolumeError::AxisTooShort { axis: a, len: n })?;
        Ok(self.apply_along_axis(&op, axis))
    }

    /// Trilinear interpolation of the values at a world point, or `None` when
    /// the point lies outside the box spanned by voxel centers.
    pub fn interpolate(&self, x: &Vector3<f64>) -> Option<f64> {
        let c = self.grid.world_to_continuous(x);
        let mut base = [0usize; 3];
        let mut frac = [0.0; 3];
        for a in 0..3 {
            let n = self.grid.dims[a];
            if !(c[a] >= 0.0 && c[a] <= (n - 1) as f64) {
                return None;
            }
            if n == 1 {
                continue;
            }
            let b = (c[a].floor() as usize).min(n - 2);
            base[a] = b;
            frac[a] = c[a] - b as f64;
        }
        let mut acc = 0.0;
        for corner in 0..8 {
            let mut w = 1.0;
            let mut idx = base;
            for a in 0..3 {
                let up = (corner >> a) & 1 == 1;
                if up {
                    if self.grid.dims[a] == 1 {
                        w = 0.0;
                        break;
                    }
                    idx[a] += 1;
                    w *= frac[a];
                } else {
                    w *= 1.0 - frac[a];
                }
            }
            if w != 0.0 {
                acc += w * self.get(idx);
            }
        }
        Some(acc)
    }
}

/// Boolean voxel grid; `true` marks voxels inside the object.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    grid: Grid,
    occupied: Vec<bool>,
}

impl OccupancyGrid {
    pub fn new(grid: Grid, occupied: Vec<bool>) -> Result<Self, VolumeError> {
        if occupied.len() != grid.len() {
            return Err(VolumeError::LengthMismatch {
                expected: grid.len(),
                actual: occupied.len(),
            });
        }
        Ok(Self { grid, occupied })
    }

    /// Occupies voxels whose value is `<= 0` (inside an SDF/TSDF).
    pub fn from_nonpositive(volume: &DenseVolume) -> Self {
        Self {
            grid: volume.grid.clone(),
            occupied: volume.values.iter().map(|&v| v <= 0.0).collect(),
        }
    }

    /// Occupies voxels whose value exceeds `threshold` (e.g. 0.5 on a 0/1 mask).
    pub fn from_threshold(volume: &DenseVolume, threshold: f64) -> Self {
        Self {
            grid: volume.grid.clone(),
            occupied: volume.values.iter().map(|&v| v > threshold).collect(),
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn occupied(&self) -> &[bool] {
        &self.occupied
    }

    pub fn is_occupied(&self, idx: [usize; 3]) -> bool {
        self.occupied[self.grid.linear_index(idx)]
    }

    pub fn complement(&self) -> OccupancyGrid {
        OccupancyGrid {
            grid: self.grid.clone(),
            occupied: self.occupied.iter().map(|o| !o).collect(),
        }
    }
}
