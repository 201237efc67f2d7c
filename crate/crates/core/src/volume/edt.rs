//! Exact Euclidean distance transform (Felzenszwalb & Huttenlocher), run as
//! three separable 1D passes over squared world-unit distances.

use super::{DenseVolume, OccupancyGrid, VolumeError};

/// Signed distance field from an occupancy grid, in world units.
///
/// Free voxels get `+` the distance from their center to the nearest occupied
/// voxel center; occupied voxels get `−` the distance to the nearest free one.
pub fn sdf_from_occupancy(occ: &OccupancyGrid) -> Result<DenseVolume, VolumeError> {
    let occupied = occ.occupied();
    let any_occupied = occupied.iter().any(|&o| o);
    let any_free = occupied.iter().any(|&o| !o);
    if !(any_occupied && any_free) {
        return Err(VolumeError::TrivialOccupancy);
    }
    let outside = squared_edt(occ, true);
    let inside = squared_edt(occ, false);
    let values = occupied
        .iter()
        .zip(outside.iter().zip(&inside))
        .map(|(&o, (&d_out, &d_in))| if o { -d_in.sqrt() } else { d_out.sqrt() })
        .collect();
    DenseVolume::new(occ.grid().clone(), values)
}

/// Squared distance from every voxel to the nearest voxel whose occupancy
/// equals `sites`.
fn squared_edt(occ: &OccupancyGrid, sites: bool) -> Vec<f64> {
    let grid = occ.grid();
    let dims = grid.dims();
    let spacing = grid.spacing();
    let mut d: Vec<f64> = occ
        .occupied()
        .iter()
        .map(|&o| if o == sites { 0.0 } else { f64::INFINITY })
        .collect();

    let max_len = dims.iter().copied().max().unwrap_or(0);
    let mut line = vec![0.0; max_len];
    let mut out = vec![0.0; max_len];
    let mut scratch = Scratch::new(max_len);

    for axis in 0..3 {
        let n = dims[axis];
        let w2 = spacing[axis] * spacing[axis];
        let stride = match axis {
            0 => dims[1] * dims[2],
            1 => dims[2],
            _ => 1,
        };
        // Enumerate the start of every line along `axis`.
        let (oa, ob) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for p in 0..dims[oa] {
            for q in 0..dims[ob] {
                let mut idx = [0usize; 3];
                idx[oa] = p;
                idx[ob] = q;
                let start = grid.linear_index(idx);
                for t in 0..n {
                    line[t] = d[start + t * stride];
                }
                lower_envelope(&line[..n], w2, &mut out[..n], &mut scratch);
                for t in 0..n {
                    d[start + t * stride] = out[t];
                }
            }
        }
    }
    d
}

struct Scratch {
    v: Vec<usize>,
    z: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self {
            v: vec![0; n],
            z: vec![0.0; n + 1],
        }
    }
}

/// `out[p] = min_q f[q] + w2·(p − q)²`, skipping infinite `f[q]`.
fn lower_envelope(f: &[f64], w2: f64, out: &mut [f64], s: &mut Scratch) {
    let n = f.len();
    let mut k: isize = -1;
    for q in 0..n {
        if !f[q].is_finite() {
            continue;
        }
        let qf = q as f64;
        loop {
            if k < 0 {
                k = 0;
                s.v[0] = q;
                s.z[0] = f64::NEG_INFINITY;
                s.z[1] = f64::INFINITY;
                break;
            }
            let vk = s.v[k as usize];
            let vf = vk as f64;
            let x = ((f[q] + w2 * qf * qf) - (f[vk] + w2 * vf * vf)) / (2.0 * w2 * (qf - vf));
            if x <= s.z[k as usize] {
                k -= 1;
                continue;
            }
            k += 1;
            s.v[k as usize] = q;
            s.z[k as usize] = x;
            s.z[k as usize + 1] = f64::INFINITY;
            break;
        }
    }
    if k < 0 {
        out.iter_mut().for_each(|o| *o = f64::INFINITY);
        return;
    }
    let mut j = 0usize;
    for (p, o) in out.iter_mut().enumerate() {
        let pf = p as f64;
        while s.z[j + 1] < pf {
            j += 1;
        }
        let q = s.v[j];
        let dq = pf - q as f64;
        *o = w2 * dq * dq + f[q];
    }
}
