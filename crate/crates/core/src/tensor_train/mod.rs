//! Three-core Tensor Train representation of 3D scalar grids.
//!
//! A tensor `F(i, j, k)` of shape `N1 × N2 × N3` is stored as
//!
//! ```text
//! F(i, j, k) = Σ_{m<r1} Σ_{n<r2} G1(i, m) · G2(m, j, n) · G3(n, k)
//! ```
//!
//! which takes `N1·r1 + r1·N2·r2 + r2·N3` scalars and `O(r1·r2)` work per
//! element. Cores are built with TT-SVD: two truncated SVDs over successive
//! unfoldings of the dense array.

mod diff;
pub mod io;
mod svd;

pub use diff::DiffMatrix;

use thiserror::Error;

use crate::volume::{Axis, DenseVolume, Grid};

/// Default cap on dense allocations made by [`TensorTrain3::reconstruct`] (1 GiB).
pub const DEFAULT_MEMORY_BUDGET: usize = 1 << 30;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TtError {
    #[error("every dimension must be at least 2, got {0:?}")]
    DimsTooSmall([usize; 3]),
    #[error("input contains a non-finite value")]
    NonFinite,
    #[error("rank cap must be at least 1")]
    ZeroRankCap,
    #[error("relative tolerance must be finite and nonnegative, got {0}")]
    BadTolerance(f64),
    #[error("build spec needs a rank cap or a tolerance")]
    NoTruncationRule,
    #[error("index {idx:?} out of range for dims {dims:?}")]
    IndexOutOfRange { idx: [usize; 3], dims: [usize; 3] },
    #[error("core shapes are inconsistent with dims {dims:?} and ranks {ranks:?}")]
    ShapeMismatch { dims: [usize; 3], ranks: [usize; 2] },
    #[error("ranks {ranks:?} exceed the SVD bounds for dims {dims:?}")]
    RankBound { dims: [usize; 3], ranks: [usize; 2] },
    #[error("dense reconstruction needs {needed} bytes, budget is {budget}")]
    BudgetExceeded { needed: usize, budget: usize },
    #[error("finite differences need at least 3 samples along the axis, got {0}")]
    GridTooShort(usize),
    #[error("grid spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("SVD did not converge")]
    SvdFailed,
}

/// Which rule wins when both a rank cap and a tolerance are set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precedence {
    /// The rank cap is a hard ceiling; the tolerance may only lower ranks.
    #[default]
    RankCap,
    /// The tolerance is always met; the cap only applies when it is looser.
    Tolerance,
}

/// Truncation policy for [`tt_svd`].
///
/// `rel_tolerance` is a target on `‖F − TT(F)‖_F / ‖F‖_F`; the budget is
/// split evenly between the two unfoldings (`ε/√2` each).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TtBuildSpec {
    pub max_rank: Option<usize>,
    pub rel_tolerance: Option<f64>,
    pub precedence: Precedence,
}

impl TtBuildSpec {
    /// Keeps every nonzero singular value.
    pub fn lossless() -> Self {
        Self {
            max_rank: None,
            rel_tolerance: Some(0.0),
            precedence: Precedence::RankCap,
        }
    }

    pub fn with_max_rank(rank: usize) -> Self {
        Self {
            max_rank: Some(rank),
            rel_tolerance: None,
            precedence: Precedence::RankCap,
        }
    }

    pub fn with_tolerance(eps: f64) -> Self {
        Self {
            max_rank: None,
            rel_tolerance: Some(eps),
            precedence: Precedence::RankCap,
        }
    }

    fn validate(&self) -> Result<(), TtError> {
        match (self.max_rank, self.rel_tolerance) {
            (None, None) => return Err(TtError::NoTruncationRule),
            (Some(0), _) => return Err(TtError::ZeroRankCap),
            _ => {}
        }
        if let Some(eps) = self.rel_tolerance {
            if !(eps >= 0.0 && eps.is_finite()) {
                return Err(TtError::BadTolerance(eps));
            }
        }
        Ok(())
    }

    /// Number of leading singular values to keep.
    ///
    /// `noise_floor` is the numerical-rank cutoff: singular values at or below
    /// it are round-off and are dropped even under a zero tolerance.
    fn choose_rank(&self, sigma: &[f64], abs_budget: Option<f64>, noise_floor: f64) -> usize {
        let full = sigma.len();
        let by_tol = abs_budget.map(|budget| {
            // Smallest r with sqrt(Σ_{j≥r} σ_j²) ≤ budget.
            let mut tail = 0.0;
            let mut r = full;
            while r > 0 {
                let next = tail + sigma[r - 1] * sigma[r - 1];
                if sigma[r - 1] > noise_floor && next.sqrt() > budget {
                    break;
                }
                tail = next;
                r -= 1;
            }
            r
        });
        let rank = match (self.max_rank, by_tol, self.precedence) {
            (Some(cap), Some(r), Precedence::RankCap) => r.min(cap),
            (Some(_), Some(r), Precedence::Tolerance) => r,
            (Some(cap), None, _) => cap,
            (None, Some(r), _) => r,
            (None, None, _) => full,
        };
        rank.clamp(1, full)
    }
}

/// Singular values recorded while building a TT.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncationReport {
    /// Full spectra of the two unfoldings, descending.
    pub singular_values: [Vec<f64>; 2],
    /// Σ σ² over the values discarded at each unfolding.
    pub discarded_sq: [f64; 2],
}

impl TruncationReport {
    /// `sqrt(Σ discarded σ²)` over both unfoldings: the TT-SVD error bound.
    pub fn error_bound(&self) -> f64 {
        (self.discarded_sq[0] + self.discarded_sq[1]).sqrt()
    }
}

/// A 3D tensor in Tensor Train format. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorTrain3 {
    dims: [usize; 3],
    ranks: [usize; 2],
    /// `N1 × r1`, row-major.
    core1: Vec<f64>,
    /// `r1 × N2 × r2`, row-major.
    core2: Vec<f64>,
    /// `r2 × N3`, row-major.
    core3: Vec<f64>,
}

impl TensorTrain3 {
    /// Assembles a TT from raw cores, checking every invariant.
    pub fn from_cores(
        dims: [usize; 3],
        ranks: [usize; 2],
        core1: Vec<f64>,
        core2: Vec<f64>,
        core3: Vec<f64>,
    ) -> Result<Self, TtError> {
        let [n1, n2, n3] = dims;
        let [r1, r2] = ranks;
        if dims.contains(&0) || ranks.contains(&0) {
            return Err(TtError::ShapeMismatch { dims, ranks });
        }
        if core1.len() != n1 * r1 || core2.len() != r1 * n2 * r2 || core3.len() != r2 * n3 {
            return Err(TtError::ShapeMismatch { dims, ranks });
        }
        if r1 > n1.min(n2 * n3) || r2 > (n1 * n2).min(n3) {
            return Err(TtError::RankBound { dims, ranks });
        }
        if core1.iter().chain(&core2).chain(&core3).any(|v| !v.is_finite()) {
            return Err(TtError::NonFinite);
        }
        Ok(Self {
            dims,
            ranks,
            core1,
            core2,
            core3,
        })
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn ranks(&self) -> [usize; 2] {
        self.ranks
    }

    pub fn core1(&self) -> &[f64] {
        &self.core1
    }

    pub fn core2(&self) -> &[f64] {
        &self.core2
    }

    pub fn core3(&self) -> &[f64] {
        &self.core3
    }

    /// Number of stored core scalars.
    pub fn num_parameters(&self) -> usize {
        self.core1.len() + self.core2.len() + self.core3.len()
    }

    /// Stored core bytes at the given scalar width, excluding metadata.
    pub fn memory_bytes(&self, bytes_per_scalar: usize) -> usize {
        self.num_parameters() * bytes_per_scalar
    }

    /// Element `(i, j, k)`.
    pub fn eval(&self, idx: [usize; 3]) -> Result<f64, TtError> {
        if (0..3).any(|a| idx[a] >= self.dims[a]) {
            return Err(TtError::IndexOutOfRange {
                idx,
                dims: self.dims,
            });
        }
        Ok(self.eval_unchecked(idx))
    }

    /// Element `(i, j, k)` without bounds checks on the multi-index.
    ///
    /// Panics (via slice indexing) rather than returning garbage when out of range.
    #[inline]
    pub fn eval_unchecked(&self, [i, j, k]: [usize; 3]) -> f64 {
        let [r1, r2] = self.ranks;
        let n2 = self.dims[1];
        let n3 = self.dims[2];
        let row = &self.core1[i * r1..(i + 1) * r1];
        let mut acc = 0.0;
        for n in 0..r2 {
            let mut w = 0.0;
            for (m, &g1) in row.iter().enumerate() {
                w += g1 * self.core2[(m * n2 + j) * r2 + n];
            }
            acc += w * self.core3[n * n3 + k];
        }
        acc
    }

    /// Dense array of every element, row-major, checked against `budget_bytes`
    /// (counted as 8 bytes per element).
    pub fn reconstruct_values(&self, budget_bytes: usize) -> Result<Vec<f64>, TtError> {
        let [n1, n2, n3] = self.dims;
        let [r1, r2] = self.ranks;
        let needed = n1
            .checked_mul(n2)
            .and_then(|v| v.checked_mul(n3))
            .and_then(|v| v.checked_mul(std::mem::size_of::<f64>()))
            .unwrap_or(usize::MAX);
        if needed > budget_bytes {
            return Err(TtError::BudgetExceeded {
                needed,
                budget: budget_bytes,
            });
        }
        let mut out = vec![0.0; n1 * n2 * n3];
        // For each i: W(j, n) = Σ_m G1(i, m) G2(m, j, n), then F(i, j, k) = Σ_n W(j, n) G3(n, k).
        let mut w = vec![0.0; n2 * r2];
        for i in 0..n1 {
            w.iter_mut().for_each(|x| *x = 0.0);
            for m in 0..r1 {
                let g1 = self.core1[i * r1 + m];
                if g1 == 0.0 {
                    continue;
                }
                let slab = &self.core2[m * n2 * r2..(m + 1) * n2 * r2];
                for (wv, g2) in w.iter_mut().zip(slab) {
                    *wv += g1 * g2;
                }
            }
            let plane = &mut out[i * n2 * n3..(i + 1) * n2 * n3];
            for j in 0..n2 {
                let dst = &mut plane[j * n3..(j + 1) * n3];
                for n in 0..r2 {
                    let wjn = w[j * r2 + n];
                    let g3 = &self.core3[n * n3..(n + 1) * n3];
                    for (d, g) in dst.iter_mut().zip(g3) {
                        *d += wjn * g;
                    }
                }
            }
        }
        Ok(out)
    }

    /// Dense volume on `grid`, whose dims must equal the TT dims.
    pub fn reconstruct_on(&self, grid: Grid, budget_bytes: usize) -> Result<DenseVolume, TtError> {
        if grid.dims() != self.dims {
            return Err(TtError::ShapeMismatch {
                dims: grid.dims(),
                ranks: self.ranks,
            });
        }
        let values = self.reconstruct_values(budget_bytes)?;
        DenseVolume::new(grid, values).map_err(|_| TtError::NonFinite)
    }

    /// Dense volume on a unit-spaced grid at the origin, using the default budget.
    pub fn reconstruct(&self) -> Result<DenseVolume, TtError> {
        let grid = Grid::new(
            self.dims,
            nalgebra::Vector3::zeros(),
            nalgebra::Vector3::repeat(1.0),
        )
        .expect("TT dims are positive");
        self.reconstruct_on(grid, DEFAULT_MEMORY_BUDGET)
    }

    /// TT of the finite-difference derivative along `axis` with grid step `h`.
    ///
    /// Applies the 1D stencil to the hanging mode index of the matching core;
    /// the other two cores and both ranks are unchanged.
    pub fn derivative(&self, axis: Axis, h: f64) -> Result<TensorTrain3, TtError> {
        let a = axis.index();
        let n = self.dims[a];
        let op = DiffMatrix::new(n, h)?;
        let [n1, n2, n3] = self.dims;
        let [r1, r2] = self.ranks;
        let mut out = self.clone();
        match axis {
            Axis::X => {
                // core1 is N1 × r1: apply D to each column.
                let mut col = vec![0.0; n1];
                let mut res = vec![0.0; n1];
                for m in 0..r1 {
                    for i in 0..n1 {
                        col[i] = self.core1[i * r1 + m];
                    }
                    op.apply_into(&col, &mut res);
                    for i in 0..n1 {
                        out.core1[i * r1 + m] = res[i];
                    }
                }
            }
            Axis::Y => {
                let mut col = vec![0.0; n2];
                let mut res = vec![0.0; n2];
                for m in 0..r1 {
                    for q in 0..r2 {
                        for j in 0..n2 {
                            col[j] = self.core2[(m * n2 + j) * r2 + q];
                        }
                        op.apply_into(&col, &mut res);
                        for j in 0..n2 {
                            out.core2[(m * n2 + j) * r2 + q] = res[j];
                        }
                    }
                }
            }
            Axis::Z => {
                // core3 rows are contiguous.
                for q in 0..r2 {
                    op.apply_into(
                        &self.core3[q * n3..(q + 1) * n3],
                        &mut out.core3[q * n3..(q + 1) * n3],
                    );
                }
            }
        }
        Ok(out)
    }

    /// Copy with every core entry rounded to the nearest `f32`, i.e. the TT
    /// exactly as it is stored on disk.
    pub fn round_to_f32(&self) -> TensorTrain3 {
        let round = |v: &Vec<f64>| v.iter().map(|&x| x as f32 as f64).collect::<Vec<_>>();
        TensorTrain3 {
            dims: self.dims,
            ranks: self.ranks,
            core1: round(&self.core1),
            core2: round(&self.core2),
            core3: round(&self.core3),
        }
    }
}

/// Numerical-rank threshold `max(m, n) · ε · σ_max`.
fn noise_floor(sigma: &[f64], rows: usize, cols: usize) -> f64 {
    let top = sigma.first().copied().unwrap_or(0.0);
    rows.max(cols) as f64 * f64::EPSILON * top
}

/// TT-SVD of a dense volume.
pub fn tt_svd(volume: &DenseVolume, spec: &TtBuildSpec) -> Result<TensorTrain3, TtError> {
    tt_svd_with_report(volume, spec).map(|(tt, _)| tt)
}

/// TT-SVD that also returns the singular values seen at each unfolding.
pub fn tt_svd_with_report(
    volume: &DenseVolume,
    spec: &TtBuildSpec,
) -> Result<(TensorTrain3, TruncationReport), TtError> {
    tt_svd_values(volume.dims(), volume.values(), spec)
}

/// TT-SVD on a raw row-major array of shape `dims`.
pub fn tt_svd_values(
    dims: [usize; 3],
    values: &[f64],
    spec: &TtBuildSpec,
) -> Result<(TensorTrain3, TruncationReport), TtError> {
    spec.validate()?;
    if dims.iter().any(|&n| n < 2) {
        return Err(TtError::DimsTooSmall(dims));
    }
    let [n1, n2, n3] = dims;
    if values.len() != n1 * n2 * n3 {
        return Err(TtError::ShapeMismatch { dims, ranks: [0, 0] });
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(TtError::NonFinite);
    }
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    let budget = spec
        .rel_tolerance
        .map(|eps| eps * norm / std::f64::consts::SQRT_2);

    // First unfolding: N1 × (N2·N3), which is exactly the row-major layout.
    let first = svd::thin_svd(values, n1, n2 * n3)?;
    let r1 = spec.choose_rank(&first.sigma, budget, noise_floor(&first.sigma, n1, n2 * n3));
    let discarded1: f64 = first.sigma[r1..].iter().map(|s| s * s).sum();
    let core1 = first.left_columns(r1);
    // Remainder S·Vᵀ is r1 × (N2·N3); read row-major it is already the
    // (r1·N2) × N3 second unfolding.
    let rest = first.scaled_right_rows(r1);

    let second = svd::thin_svd(&rest, r1 * n2, n3)?;
    let r2 = spec.choose_rank(&second.sigma, budget, noise_floor(&second.sigma, r1 * n2, n3));
    let discarded2: f64 = second.sigma[r2..].iter().map(|s| s * s).sum();
    let core2 = second.left_columns(r2);
    let core3 = second.scaled_right_rows(r2);

    let tt = TensorTrain3::from_cores(dims, [r1, r2], core1, core2, core3)?;
    let report = TruncationReport {
        singular_values: [first.sigma, second.sigma],
        discarded_sq: [discarded1, discarded2],
    };
    Ok((tt, report))
}
