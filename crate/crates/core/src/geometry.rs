//! SE(3) poses, twists and the closed-form known-correspondence alignment.
//!
//! Twists are ordered `(ω, v)`: rotational part first. A step `ξ` is applied
//! by left multiplication, `T ← exp(ξ^) · T`.

use std::fmt;

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, UnitSphere};
use thiserror::Error;

use crate::cloud::PointCloud;

/// Below this rotation angle `exp_se3` switches to its Taylor series.
pub const SMALL_ANGLE: f64 = 1e-8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("point clouds differ in size: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("need at least 3 point pairs, got {0}")]
    TooFewPoints(usize),
    #[error("points are collinear or coincident")]
    Degenerate,
    #[error("rotation is not orthonormal with det +1")]
    NotARotation,
    #[error("pose contains non-finite values")]
    NonFinite,
}

/// Rigid transform `x ↦ R·x + t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Pose {
    pub fn identity() -> Pose {
        Pose {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, requiring `RᵀR = I` and `det R = 1` within 1e-9.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Pose, GeometryError> {
        if rotation.iter().chain(translation.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite);
        }
        let ortho = (rotation.transpose() * rotation - Matrix3::identity()).amax();
        if ortho > 1e-9 || (rotation.determinant() - 1.0).abs() > 1e-9 {
            return Err(GeometryError::NotARotation);
        }
        Ok(Pose {
            rotation,
            translation,
        })
    }

    pub fn from_translation(t: Vector3<f64>) -> Pose {
        Pose {
            rotation: Matrix3::identity(),
            translation: t,
        }
    }

    /// Parses 12 row-major numbers: the 3×3 rotation followed by `t`.
    pub fn from_row_major(values: &[f64; 12]) -> Result<Pose, GeometryError> {
        let r = Matrix3::from_row_slice(&values[..9]);
        Pose::new(r, Vector3::new(values[9], values[10], values[11]))
    }

    /// Row-major rotation then translation.
    pub fn to_row_major(&self) -> [f64; 12] {
        let mut out = [0.0; 12];
        for i in 0..3 {
            for j in 0..3 {
                out[i * 3 + j] = self.rotation[(i, j)];
            }
            out[9 + i] = self.translation[i];
        }
        out
    }

    #[inline]
    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    /// Largest deviation from the rotation invariants.
    pub fn orthonormality_error(&self) -> f64 {
        let ortho = (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax();
        ortho.max((self.rotation.determinant() - 1.0).abs())
    }
}

impl Default for Pose {
    fn default() -> Self {
        Pose::identity()
    }
}

/// 12 row-major values with 12 decimal digits, comma separated.
impl fmt::Display for Pose {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (n, v) in self.to_row_major().iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "{v:.12}")?;
        }
        Ok(())
    }
}

/// Local SE(3) coordinates `ξ = (ω, v)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub omega: Vector3<f64>,
    pub v: Vector3<f64>,
}

impl Twist {
    pub fn new(omega: Vector3<f64>, v: Vector3<f64>) -> Twist {
        Twist { omega, v }
    }

    pub fn zero() -> Twist {
        Twist::default()
    }

    pub fn from_array(x: [f64; 6]) -> Twist {
        Twist {
            omega: Vector3::new(x[0], x[1], x[2]),
            v: Vector3::new(x[3], x[4], x[5]),
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.omega.x,
            self.omega.y,
            self.omega.z,
            self.v.x,
            self.v.y,
            self.v.z,
        ]
    }

    /// Euclidean norm of the 6-vector (radians and meters mixed).
    pub fn norm(&self) -> f64 {
        (self.omega.norm_squared() + self.v.norm_squared()).sqrt()
    }

    pub fn scale(&self, s: f64) -> Twist {
        Twist {
            omega: self.omega * s,
            v: self.v * s,
        }
    }
}

impl std::ops::Neg for Twist {
    type Output = Twist;

    fn neg(self) -> Twist {
        self.scale(-1.0)
    }
}

/// Skew-symmetric matrix with `hat(ω)·x = ω × x`.
pub fn hat(w: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Exponential map `se(3) → SE(3)` (Rodrigues rotation and its left Jacobian).
pub fn exp_se3(xi: &Twist) -> Pose {
    let theta = xi.omega.norm();
    let w = hat(&xi.omega);
    let w2 = w * w;
    let (a, b, c) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 - t2 / 6.0, 0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let (s, co) = theta.sin_cos();
        (
            s / theta,
            (1.0 - co) / (theta * theta),
            (theta - s) / (theta * theta * theta),
        )
    };
    let rotation = Matrix3::identity() + w * a + w2 * b;
    let left_jacobian = Matrix3::identity() + w * b + w2 * c;
    Pose {
        rotation,
        translation: left_jacobian * xi.v,
    }
}

/// `exp(ξ^) · pose`.
pub fn retract(pose: &Pose, xi: &Twist) -> Pose {
    exp_se3(xi).compose(pose)
}

/// Geodesic rotation angle (radians, in `[0, π]`) between two rotations.
///
/// Equal to `arccos((tr(R_aᵀ R_b) − 1) / 2)`, evaluated through `atan2` so it
/// stays accurate near 0 and π.
pub fn rotation_angle(ra: &Matrix3<f64>, rb: &Matrix3<f64>) -> f64 {
    let m = ra.transpose() * rb;
    let cos = (m.trace() - 1.0) * 0.5;
    let axis = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let sin = 0.5 * axis.norm();
    sin.atan2(cos).clamp(0.0, std::f64::consts::PI)
}

/// Rotation and translation error of `estimate` against `truth`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PoseError {
    /// Radians.
    pub rotation: f64,
    /// Meters.
    pub translation: f64,
}

pub fn pose_error(estimate: &Pose, truth: &Pose) -> PoseError {
    PoseError {
        rotation: rotation_angle(&estimate.rotation, &truth.rotation),
        translation: (estimate.translation - truth.translation).norm(),
    }
}

/// Random rigid offset with exact magnitudes: translation `trans_mag·u`,
/// rotation by `rot_mag` radians about axis `w`, with `u`, `w` independent
/// and uniform on the unit sphere.
pub fn sample_perturbation<R: Rng + ?Sized>(trans_mag: f64, rot_mag: f64, rng: &mut R) -> Pose {
    let u: [f64; 3] = UnitSphere.sample(rng);
    let w: [f64; 3] = UnitSphere.sample(rng);
    let axis = Vector3::from(w);
    let rotation = exp_se3(&Twist::new(axis * rot_mag, Vector3::zeros())).rotation;
    Pose {
        rotation,
        translation: Vector3::from(u) * trans_mag,
    }
}

/// Least-squares rigid transform mapping `src[i]` onto `dst[i]` (Kabsch),
/// with the reflection case corrected through the determinant sign.
pub fn align_known_correspondences(src: &PointCloud, dst: &PointCloud) -> Result<Pose, GeometryError> {
    if src.len() != dst.len() {
        return Err(GeometryError::SizeMismatch(src.len(), dst.len()));
    }
    if src.len() < 3 {
        return Err(GeometryError::TooFewPoints(src.len()));
    }
    let cs = src.centroid().expect("nonempty");
    let cd = dst.centroid().expect("nonempty");

    let mut cov = Matrix3::zeros();
    let mut spread = Matrix3::zeros();
    for (p, q) in src.iter().zip(dst.iter()) {
        let a = p - cs;
        cov += (q - cd) * a.transpose();
        spread += a * a.transpose();
    }
    // Collinear sources leave the rotation about their line undetermined.
    let mut s = spread.symmetric_eigenvalues().as_slice().to_vec();
    s.sort_by(|a, b| b.total_cmp(a));
    if !(s[0] > 0.0) || s[1] <= 1e-12 * s[0] {
        return Err(GeometryError::Degenerate);
    }

    let svd = cov.svd(true, true);
    let u = svd.u.ok_or(GeometryError::Degenerate)?;
    let vt = svd.v_t.ok_or(GeometryError::Degenerate)?;
    // The reflection fix flips the direction of the smallest singular value,
    // wherever the backend placed it.
    let smallest = svd.singular_values.imin();
    let mut fix = Matrix3::identity();
    fix[(smallest, smallest)] = (u * vt).determinant().signum();
    let rotation = u * fix * vt;
    Ok(Pose {
        rotation,
        translation: cd - rotation * cs,
    })
}
