//! Closed-form signed distance fixtures.

use nalgebra::Vector3;

use super::{DenseVolume, Grid, VolumeError};

#[derive(Debug, Clone, PartialEq)]
pub enum Shape {
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    /// Axis-aligned box given by its center and half extents.
    Box {
        center: Vector3<f64>,
        half_extents: Vector3<f64>,
    },
    Union(Vec<Shape>),
}

impl Shape {
    pub fn sphere(radius: f64) -> Shape {
        Shape::Sphere {
            center: Vector3::zeros(),
            radius,
        }
    }

    pub fn cuboid(half_extents: Vector3<f64>) -> Shape {
        Shape::Box {
            center: Vector3::zeros(),
            half_extents,
        }
    }

    pub fn validate(&self) -> Result<(), VolumeError> {
        match self {
            Shape::Sphere { center, radius } => {
                if !(*radius > 0.0 && radius.is_finite()) || center.iter().any(|c| !c.is_finite()) {
                    return Err(VolumeError::DegenerateShape(format!("sphere radius {radius}")));
                }
            }
            Shape::Box {
                center,
                half_extents,
            } => {
                if half_extents.iter().any(|e| !(*e > 0.0 && e.is_finite()))
                    || center.iter().any(|c| !c.is_finite())
                {
                    return Err(VolumeError::DegenerateShape(format!(
                        "box half extents {:?}",
                        half_extents.as_slice()
                    )));
                }
            }
            Shape::Union(parts) => {
                if parts.is_empty() {
                    return Err(VolumeError::DegenerateShape("empty union".into()));
                }
                for p in parts {
                    p.validate()?;
                }
            }
        }
        Ok(())
    }

    /// Exact signed distance (negative inside). Unions take the minimum,
    /// which is exact outside and a lower bound on depth inside overlaps.
    pub fn signed_distance(&self, x: &Vector3<f64>) -> f64 {
        match self {
            Shape::Sphere { center, radius } => (x - center).norm() - radius,
            Shape::Box {
                center,
                half_extents,
            } => {
                let q = (x - center).abs() - half_extents;
                let outside = q.map(|v| v.max(0.0)).norm();
                let inside = q.max().min(0.0);
                outside + inside
            }
            Shape::Union(parts) => parts
                .iter()
                .map(|p| p.signed_distance(x))
                .fold(f64::INFINITY, f64::min),
        }
    }

    /// Gradient of [`Shape::signed_distance`] where it is differentiable.
    pub fn gradient(&self, x: &Vector3<f64>) -> Vector3<f64> {
        match self {
            Shape::Sphere { center, .. } => {
                let d = x - center;
                let n = d.norm();
                if n > 0.0 {
                    d / n
                } else {
                    Vector3::zeros()
                }
            }
            Shape::Box {
                center,
                half_extents,
            } => {
                let p = x - center;
                let q = p.abs() - half_extents;
                let sign = p.map(|v| if v < 0.0 { -1.0 } else { 1.0 });
                if q.max() > 0.0 {
                    let outer = q.map(|v| v.max(0.0));
                    let n = outer.norm();
                    outer.component_mul(&sign) / n
                } else {
                    let a = q.imax();
                    let mut g = Vector3::zeros();
                    g[a] = sign[a];
                    g
                }
            }
            Shape::Union(parts) => parts
                .iter()
                .min_by(|a, b| a.signed_distance(x).total_cmp(&b.signed_distance(x)))
                .map(|p| p.gradient(x))
                .unwrap_or_else(Vector3::zeros),
        }
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> (Vector3<f64>, Vector3<f64>) {
        match self {
            Shape::Sphere { center, radius } => {
                (center - Vector3::repeat(*radius), center + Vector3::repeat(*radius))
            }
            Shape::Box {
                center,
                half_extents,
            } => (center - half_extents, center + half_extents),
            Shape::Union(parts) => parts.iter().map(Shape::bounds).fold(
                (Vector3::repeat(f64::INFINITY), Vector3::repeat(f64::NEG_INFINITY)),
                |(lo, hi), (a, b)| (lo.inf(&a), hi.sup(&b)),
            ),
        }
    }
}

/// Parses `sphere:R`, `box:HX,HY,HZ` and `union:A;B;...`. Sphere and box
/// accept an optional `@X,Y,Z` center suffix.
impl std::str::FromStr for Shape {
    type Err = VolumeError;

    fn from_str(s: &str) -> Result<Shape, VolumeError> {
        let bad = || VolumeError::DegenerateShape(format!("cannot parse shape {s:?}"));
        let (kind, rest) = s.trim().split_once(':').ok_or_else(bad)?;
        if kind == "union" {
            let parts = rest
                .split(';')
                .map(str::parse)
                .collect::<Result<Vec<Shape>, _>>()?;
            let shape = Shape::Union(parts);
            shape.validate()?;
            return Ok(shape);
        }
        let (params, center) = match rest.split_once('@') {
            Some((p, c)) => (p, parse_numbers(c).ok_or_else(bad)?),
            None => (rest, vec![0.0; 3]),
        };
        if center.len() != 3 {
            return Err(bad());
        }
        let center = Vector3::new(center[0], center[1], center[2]);
        let params = parse_numbers(params).ok_or_else(bad)?;
        let shape = match (kind, params.as_slice()) {
            ("sphere", &[radius]) => Shape::Sphere { center, radius },
            ("box", &[x, y, z]) => Shape::Box {
                center,
                half_extents: Vector3::new(x, y, z),
            },
            _ => return Err(bad()),
        };
        shape.validate()?;
        Ok(shape)
    }
}

fn parse_numbers(s: &str) -> Option<Vec<f64>> {
    s.split(',').map(|v| v.trim().parse().ok()).collect()
}

/// Samples the exact signed distance of `shape` at every voxel center.
pub fn analytic_sdf(shape: &Shape, grid: &Grid) -> Result<DenseVolume, VolumeError> {
    shape.validate()?;
    let (lo, hi) = shape.bounds();
    if !(grid.contains_center_box(&lo) && grid.contains_center_box(&hi)) {
        return Err(VolumeError::ShapeOutOfBounds);
    }
    DenseVolume::from_world_fn(grid.clone(), |x| shape.signed_distance(x))
}
