//! Reference implementations shared by the integration tests. Each one is
//! written directly from the definition and shares no code path with the
//! library routine it checks.
#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ttreg::TensorTrain3;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// TT with i.i.d. uniform cores.
pub fn random_tt(dims: [usize; 3], ranks: [usize; 2], rng: &mut impl Rng) -> TensorTrain3 {
    let [n1, n2, n3] = dims;
    let [r1, r2] = ranks;
    TensorTrain3::from_cores(
        dims,
        ranks,
        uniform(n1 * r1, rng),
        uniform(r1 * n2 * r2, rng),
        uniform(r2 * n3, rng),
    )
    .unwrap()
}

/// `Σ_{a,b} G1[i,a] G2[a,j,b] G3[b,k]` over the whole grid, row-major.
pub fn contract(tt: &TensorTrain3) -> Vec<f64> {
    let [n1, n2, n3] = tt.dims();
    let [r1, r2] = tt.ranks();
    let (g1, g2, g3) = (tt.core1(), tt.core2(), tt.core3());
    let mut out = Vec::with_capacity(n1 * n2 * n3);
    for i in 0..n1 {
        for j in 0..n2 {
            for k in 0..n3 {
                let mut s = 0.0;
                for a in 0..r1 {
                    for b in 0..r2 {
                        s += g1[i * r1 + a] * g2[(a * n2 + j) * r2 + b] * g3[b * n3 + k];
                    }
                }
                out.push(s);
            }
        }
    }
    out
}

/// First derivative along `axis` of a row-major grid: central differences
/// inside, one-sided three-point formulas at both ends.
pub fn finite_difference(values: &[f64], dims: [usize; 3], axis: usize, h: f64) -> Vec<f64> {
    let at = |i: usize, j: usize, k: usize| values[(i * dims[1] + j) * dims[2] + k];
    let n = dims[axis];
    let mut out = vec![0.0; values.len()];
    for i in 0..dims[0] {
        for j in 0..dims[1] {
            for k in 0..dims[2] {
                let idx = [i, j, k];
                let f = |t: usize| {
                    let mut q = idx;
                    q[axis] = t;
                    at(q[0], q[1], q[2])
                };
                let t = idx[axis];
                let d = if t == 0 {
                    (-1.5 * f(0) + 2.0 * f(1) - 0.5 * f(2)) / h
                } else if t == n - 1 {
                    (0.5 * f(n - 3) - 2.0 * f(n - 2) + 1.5 * f(n - 1)) / h
                } else {
                    (f(t + 1) - f(t - 1)) / (2.0 * h)
                };
                out[(i * dims[1] + j) * dims[2] + k] = d;
            }
        }
    }
    out
}

pub fn frobenius(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn frobenius_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Signed distance by exhaustive search over voxel centers: `+d` to the
/// nearest occupied voxel for free voxels, `−d` to the nearest free voxel
/// for occupied ones.
pub fn brute_force_edt(occupied: &[bool], dims: [usize; 3], h: [f64; 3]) -> Vec<f64> {
    let cells: Vec<[usize; 3]> = (0..dims[0])
        .flat_map(|i| (0..dims[1]).flat_map(move |j| (0..dims[2]).map(move |k| [i, j, k])))
        .collect();
    cells
        .iter()
        .enumerate()
        .map(|(a, p)| {
            let inside = occupied[a];
            let best = cells
                .iter()
                .enumerate()
                .filter(|&(b, _)| occupied[b] != inside)
                .map(|(_, q)| {
                    (0..3)
                        .map(|d| {
                            let t = (p[d] as f64 - q[d] as f64) * h[d];
                            t * t
                        })
                        .sum::<f64>()
                })
                .fold(f64::INFINITY, f64::min)
                .sqrt();
            if inside {
                -best
            } else {
                best
            }
        })
        .collect()
}

/// Unit quaternion `(w, x, y, z)` of a rotation matrix.
pub fn quaternion(r: &Matrix3<f64>) -> [f64; 4] {
    let tr = r.trace();
    let q = if tr > 0.0 {
        let s = 2.0 * (tr + 1.0).sqrt();
        [0.25 * s, (r[(2, 1)] - r[(1, 2)]) / s, (r[(0, 2)] - r[(2, 0)]) / s, (r[(1, 0)] - r[(0, 1)]) / s]
    } else if r[(0, 0)] > r[(1, 1)] && r[(0, 0)] > r[(2, 2)] {
        let s = 2.0 * (1.0 + r[(0, 0)] - r[(1, 1)] - r[(2, 2)]).sqrt();
        [(r[(2, 1)] - r[(1, 2)]) / s, 0.25 * s, (r[(0, 1)] + r[(1, 0)]) / s, (r[(0, 2)] + r[(2, 0)]) / s]
    } else if r[(1, 1)] > r[(2, 2)] {
        let s = 2.0 * (1.0 + r[(1, 1)] - r[(0, 0)] - r[(2, 2)]).sqrt();
        [(r[(0, 2)] - r[(2, 0)]) / s, (r[(0, 1)] + r[(1, 0)]) / s, 0.25 * s, (r[(1, 2)] + r[(2, 1)]) / s]
    } else {
        let s = 2.0 * (1.0 + r[(2, 2)] - r[(0, 0)] - r[(1, 1)]).sqrt();
        [(r[(1, 0)] - r[(0, 1)]) / s, (r[(0, 2)] + r[(2, 0)]) / s, (r[(1, 2)] + r[(2, 1)]) / s, 0.25 * s]
    };
    let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
    q.map(|v| v / n)
}

/// Geodesic angle between two rotations from their quaternions.
pub fn quaternion_angle(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let (qa, qb) = (quaternion(a), quaternion(b));
    let dot: f64 = qa.iter().zip(&qb).map(|(x, y)| x * y).sum();
    2.0 * dot.abs().min(1.0).acos()
}

/// Rotation from a uniformly distributed unit quaternion.
pub fn random_rotation(rng: &mut impl Rng) -> Matrix3<f64> {
    let q = loop {
        let q: [f64; 4] = std::array::from_fn(|_| rng.random_range(-1.0..1.0));
        let n = q.iter().map(|v| v * v).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            break q.map(|v| v / n);
        }
    };
    let [w, x, y, z] = q;
    Matrix3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

pub fn random_vector(scale: f64, rng: &mut impl Rng) -> Vector3<f64> {
    Vector3::new(
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
        rng.random_range(-scale..scale),
    )
}
