//! Storage requirements of the map representations, as closed-form counts.

use std::io::{self, Write};

/// Scalars are accounted as single precision throughout.
pub const BYTES_PER_SCALAR: usize = 4;

/// `3 · points` coordinates.
pub fn point_cloud_bytes(points: usize) -> usize {
    3 * points * BYTES_PER_SCALAR
}

/// One scalar per voxel.
pub fn dense_bytes(dims: [usize; 3]) -> usize {
    dims.iter().product::<usize>() * BYTES_PER_SCALAR
}

/// `N1·r1 + r1·N2·r2 + r2·N3` core entries.
pub fn tt_bytes(dims: [usize; 3], ranks: [usize; 2]) -> usize {
    let [n1, n2, n3] = dims;
    let [r1, r2] = ranks;
    (n1 * r1 + r1 * n2 * r2 + r2 * n3) * BYTES_PER_SCALAR
}

/// `K` keypoints with `D`-dimensional descriptors.
pub fn feature_bytes(keypoints: usize, descriptor_dim: usize) -> usize {
    keypoints * descriptor_dim * BYTES_PER_SCALAR
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemoryRow {
    pub representation: String,
    pub bytes: usize,
}

/// Rows for a point cloud, a dense SDF, its TT form and, optionally, a
/// keypoint-descriptor map.
pub fn memory_report(
    points: usize,
    dims: [usize; 3],
    ranks: [usize; 2],
    features: Option<(usize, usize)>,
) -> Vec<MemoryRow> {
    let mut rows = vec![
        MemoryRow {
            representation: "PC".into(),
            bytes: point_cloud_bytes(points),
        },
        MemoryRow {
            representation: "SDF".into(),
            bytes: dense_bytes(dims),
        },
        MemoryRow {
            representation: format!("TT-SDF(R={},{})", ranks[0], ranks[1]),
            bytes: tt_bytes(dims, ranks),
        },
    ];
    if let Some((k, d)) = features {
        rows.push(MemoryRow {
            representation: format!("features(K={k},D={d})"),
            bytes: feature_bytes(k, d),
        });
    }
    rows
}

/// Decimal units with one significant decimal for megabytes: `32.2MB`,
/// `321kB`, `512B`.
pub fn format_bytes(bytes: usize) -> String {
    let b = bytes as f64;
    if b >= 1e6 {
        format!("{:.1}MB", b / 1e6)
    } else if b >= 1e3 {
        format!("{:.0}kB", b / 1e3)
    } else {
        format!("{bytes}B")
    }
}

pub fn write_memory_csv<W: Write>(w: &mut W, rows: &[MemoryRow]) -> io::Result<()> {
    writeln!(w, "# ttreg memory report v1")?;
    writeln!(w, "representation,bytes,human")?;
    for row in rows {
        writeln!(w, "{},{},{}", row.representation, row.bytes, format_bytes(row.bytes))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formulas() {
        assert_eq!(point_cloud_bytes(10), 120);
        assert_eq!(dense_bytes([2, 3, 4]), 96);
        assert_eq!(tt_bytes([5, 5, 5], [1, 1]), 60);
        assert_eq!(feature_bytes(5000, 32), 640_000);
    }

    #[test]
    fn human_units() {
        assert_eq!(format_bytes(32_186_304), "32.2MB");
        assert_eq!(format_bytes(3_138_240), "3.1MB");
        assert_eq!(format_bytes(321_084), "321kB");
        assert_eq!(format_bytes(999), "999B");
    }

    #[test]
    fn report_rows_and_csv() {
        let rows = memory_report(100, [4, 4, 4], [2, 2], Some((10, 8)));
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[2].bytes, (8 + 16 + 8) * 4);
        let mut out = Vec::new();
        write_memory_csv(&mut out, &rows).unwrap();
        let text = String::from_utf8(out).unwrap();
        assert!(text.starts_with("# ttreg memory report v1\nrepresentation,bytes,human\nPC,1200,1kB\n"));
    }
}
