//! `VOL3` raw volume container.
//!
//! ```text
//! "VOL3"  u16 version  u32 N1 N2 N3  f64 origin[3]  f64 spacing[3]
//! f32 values[N1·N2·N3]  (row-major, last axis fastest)
//! u32 CRC32 of every preceding byte
//! ```

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::Vector3;

use super::{DenseVolume, Grid};
use crate::format::{read_f32_vec, ChecksumReader, ChecksumWriter, FormatError};

pub const MAGIC: &[u8; 4] = b"VOL3";
pub const VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 3 * 4 + 6 * 8;

pub fn write_volume<W: Write>(writer: W, vol: &DenseVolume) -> Result<(), FormatError> {
    let mut w = ChecksumWriter::new(writer);
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    for d in vol.dims() {
        let d = u32::try_from(d).map_err(|_| FormatError::Corrupt("dimension exceeds u32"))?;
        w.write_u32::<LittleEndian>(d)?;
    }
    let grid = vol.grid();
    for v in grid.origin().iter().chain(grid.spacing().iter()) {
        w.write_f64::<LittleEndian>(*v)?;
    }
    for &v in vol.values() {
        w.write_f32::<LittleEndian>(v as f32)?;
    }
    w.finish()?;
    Ok(())
}

pub fn read_volume<R: Read>(reader: R) -> Result<DenseVolume, FormatError> {
    let mut r = ChecksumReader::new(reader);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(FormatError::BadMagic {
            expected: *MAGIC,
            found: magic,
        });
    }
    let version = r.read_u16::<LittleEndian>()?;
    if version != VERSION {
        return Err(FormatError::UnsupportedVersion(version));
    }
    let mut dims = [0usize; 3];
    for d in &mut dims {
        *d = r.read_u32::<LittleEndian>()? as usize;
    }
    let mut meta = [0f64; 6];
    r.read_f64_into::<LittleEndian>(&mut meta)?;
    let grid = Grid::new(
        dims,
        Vector3::new(meta[0], meta[1], meta[2]),
        Vector3::new(meta[3], meta[4], meta[5]),
    )
    .map_err(|e| FormatError::Invalid(e.to_string()))?;
    let count = dims[0]
        .checked_mul(dims[1])
        .and_then(|v| v.checked_mul(dims[2]))
        .ok_or(FormatError::Corrupt("volume size overflows"))?;
    let values = read_f32_vec(&mut r, count)?;
    r.verify_trailer()?;
    DenseVolume::new(grid, values).map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn save(path: impl AsRef<Path>, vol: &DenseVolume) -> Result<(), FormatError> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_volume(&mut buf, vol)?;
    buf.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<DenseVolume, FormatError> {
    let file = std::fs::File::open(path)?;
    read_volume(std::io::BufReader::new(file))
}
