//! Synthetic surface observations drawn from a signed distance source.

use nalgebra::Vector3;
use rand::Rng;

use super::{DenseVolume, Grid, Shape, VolumeError};
use crate::cloud::PointCloud;

/// Anything that can report a signed distance and its gradient at a point.
pub trait SdfSource {
    fn signed_distance(&self, x: &Vector3<f64>) -> Option<f64>;
    fn gradient(&self, x: &Vector3<f64>) -> Option<Vector3<f64>>;
}

impl SdfSource for Shape {
    fn signed_distance(&self, x: &Vector3<f64>) -> Option<f64> {
        Some(Shape::signed_distance(self, x))
    }

    fn gradient(&self, x: &Vector3<f64>) -> Option<Vector3<f64>> {
        Some(Shape::gradient(self, x))
    }
}

/// Trilinear interpolation of the grid values, gradient by central
/// differences of the interpolant at a quarter-voxel step.
impl SdfSource for DenseVolume {
    fn signed_distance(&self, x: &Vector3<f64>) -> Option<f64> {
        self.interpolate(x)
    }

    fn gradient(&self, x: &Vector3<f64>) -> Option<Vector3<f64>> {
        let h = self.grid().spacing() * 0.25;
        let mut g = Vector3::zeros();
        for a in 0..3 {
            let mut e = Vector3::zeros();
            e[a] = h[a];
            let (p, m) = (self.interpolate(&(x + e)), self.interpolate(&(x - e)));
            g[a] = match (p, m) {
                (Some(p), Some(m)) => (p - m) / (2.0 * h[a]),
                (Some(p), None) => (p - self.interpolate(x)?) / h[a],
                (None, Some(m)) => (self.interpolate(x)? - m) / h[a],
                (None, None) => return None,
            };
        }
        Some(g)
    }
}

/// Attempts allowed per requested point before giving up.
const ATTEMPTS_PER_POINT: usize = 2000;

/// Draws `count` points within `min_spacing / 2` of the zero level set.
///
/// Candidates are drawn uniformly in the box spanned by voxel centers, kept
/// when within a few voxels of the surface, and then projected once along
/// the gradient: `x ← x − sdf(x)·∇sdf(x)/‖∇sdf(x)‖²`.
pub fn sample_surface_points<S: SdfSource + ?Sized, R: Rng + ?Sized>(
    source: &S,
    grid: &Grid,
    count: usize,
    rng: &mut R,
) -> Result<PointCloud, VolumeError> {
    let h = grid.min_spacing();
    let tolerance = 0.5 * h;
    let band = 4.0 * h;
    let (lo, hi) = grid.center_bounds();
    let max_attempts = count.saturating_mul(ATTEMPTS_PER_POINT).max(10_000);
    let mut points = Vec::with_capacity(count);
    let mut attempts = 0;
    while points.len() < count && attempts < max_attempts {
        attempts += 1;
        let x = Vector3::new(
            sample_axis(rng, lo.x, hi.x),
            sample_axis(rng, lo.y, hi.y),
            sample_axis(rng, lo.z, hi.z),
        );
        let Some(d) = source.signed_distance(&x) else { continue };
        if d.abs() > band {
            continue;
        }
        let Some(g) = source.gradient(&x) else { continue };
        let g2 = g.norm_squared();
        if !(g2 > 1e-12) {
            continue;
        }
        let y = x - g * (d / g2);
        if !grid.contains_center_box(&y) {
            continue;
        }
        match source.signed_distance(&y) {
            Some(dy) if dy.abs() <= tolerance => points.push(y),
            _ => {}
        }
    }
    if points.len() < count {
        return Err(VolumeError::SurfaceNotFound {
            found: points.len(),
            requested: count,
            attempts,
        });
    }
    Ok(PointCloud::new(points))
}

fn sample_axis<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        rng.random_range(lo..hi)
    } else {
        lo
    }
}
