//! `TT3F` container: a TT with single-precision cores.
//!
//! ```text
//! "TT3F"  u16 version  u32 N1 N2 N3  u32 r1 r2
//! f32 core1[N1·r1]  f32 core2[r1·N2·r2]  f32 core3[r2·N3]
//! u32 CRC32 of every preceding byte
//! ```
//!
//! All integers and floats are little-endian; cores are row-major.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::TensorTrain3;
use crate::format::{read_f32_vec, ChecksumReader, ChecksumWriter, FormatError};

pub const MAGIC: &[u8; 4] = b"TT3F";
pub const VERSION: u16 = 1;
/// Magic, version, dims and ranks.
pub const HEADER_LEN: usize = 4 + 2 + 3 * 4 + 2 * 4;
pub const TRAILER_LEN: usize = 4;

/// Serializes `tt`, rounding cores to `f32`.
pub fn write_tt<W: Write>(writer: W, tt: &TensorTrain3) -> Result<(), FormatError> {
    let mut w = ChecksumWriter::new(writer);
    w.write_all(MAGIC)?;
    w.write_u16::<LittleEndian>(VERSION)?;
    for d in tt.dims() {
        w.write_u32::<LittleEndian>(to_u32(d)?)?;
    }
    for r in tt.ranks() {
        w.write_u32::<LittleEndian>(to_u32(r)?)?;
    }
    for core in [tt.core1(), tt.core2(), tt.core3()] {
        for &v in core {
            w.write_f32::<LittleEndian>(v as f32)?;
        }
    }
    w.finish()?;
    Ok(())
}

pub fn read_tt<R: Read>(reader: R) -> Result<TensorTrain3, FormatError> {
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
    let mut ranks = [0usize; 2];
    for q in &mut ranks {
        *q = r.read_u32::<LittleEndian>()? as usize;
    }
    let [n1, n2, n3] = dims;
    let [r1, r2] = ranks;
    let sizes = [
        n1.checked_mul(r1),
        r1.checked_mul(n2).and_then(|v| v.checked_mul(r2)),
        r2.checked_mul(n3),
    ];
    let mut cores = Vec::with_capacity(3);
    for size in sizes {
        let size = size.ok_or(FormatError::Corrupt("core size overflows"))?;
        cores.push(read_f32_vec(&mut r, size)?);
    }
    r.verify_trailer()?;
    let core3 = cores.pop().unwrap();
    let core2 = cores.pop().unwrap();
    let core1 = cores.pop().unwrap();
    TensorTrain3::from_cores(dims, ranks, core1, core2, core3)
        .map_err(|e| FormatError::Invalid(e.to_string()))
}

pub fn save(path: impl AsRef<Path>, tt: &TensorTrain3) -> Result<(), FormatError> {
    let file = std::fs::File::create(path)?;
    let mut buf = std::io::BufWriter::new(file);
    write_tt(&mut buf, tt)?;
    buf.flush()?;
    Ok(())
}

pub fn load(path: impl AsRef<Path>) -> Result<TensorTrain3, FormatError> {
    let file = std::fs::File::open(path)?;
    read_tt(std::io::BufReader::new(file))
}

/// Exact size in bytes of the serialized container.
pub fn encoded_len(tt: &TensorTrain3) -> usize {
    HEADER_LEN + tt.memory_bytes(4) + TRAILER_LEN
}

fn to_u32(v: usize) -> Result<u32, FormatError> {
    u32::try_from(v).map_err(|_| FormatError::Corrupt("dimension exceeds u32"))
}
