//! Shared plumbing for the binary container formats.

use std::io::{self, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("unsupported format version {0}")]
    UnsupportedVersion(u16),
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("corrupt file: {0}")]
    Corrupt(&'static str),
    #[error("invalid contents: {0}")]
    Invalid(String),
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unsupported: {0}")]
    Unsupported(String),
}

/// Writer that hashes everything passing through it; `finish` appends the
/// CRC32 as a little-endian `u32`.
pub(crate) struct ChecksumWriter<W: Write> {
    inner: W,
    hasher: crc32fast::Hasher,
}

impl<W: Write> ChecksumWriter<W> {
    pub fn new(inner: W) -> Self {
        Self {
            inner,
            hasher: crc32fast::Hasher::new(),
        }
    }

    pub fn finish(mut self) -> io::Result<W> {
        let crc = self.hasher.clone().finalize();
        self.inner.write_all(&crc.to_le_bytes())?;
        Ok(self.inner)
    }
}

impl<W: Write> Write for ChecksumWriter<W> {
    fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
        let n = self.inner.write(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.inner.flush()
    }
}

pub(crate) struct ChecksumReader<R: Read> {
    inner: R,
    hasher: crc32fast::Hasher,
}

impl<R: Read> ChecksumReader<R> {
    pub fn new(inner: R) -> Self {
        Self {
            inner,
            hasher: crc32fast::Hasher::new(),
        }
    }

    /// Reads the trailing CRC32 and compares it with the bytes seen so far.
    pub fn verify_trailer(mut self) -> Result<(), FormatError> {
        let computed = self.hasher.clone().finalize();
        let stored = self.inner.read_u32::<LittleEndian>()?;
        if stored != computed {
            return Err(FormatError::Checksum { stored, computed });
        }
        let mut extra = [0u8; 1];
        if self.inner.read(&mut extra)? != 0 {
            return Err(FormatError::Corrupt("trailing bytes after checksum"));
        }
        Ok(())
    }
}

impl<R: Read> Read for ChecksumReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.hasher.update(&buf[..n]);
        Ok(n)
    }
}

/// Reads `count` little-endian `f32`s, widening to `f64`.
///
/// Reads in bounded chunks so a corrupt header cannot trigger a huge allocation
/// before the stream runs dry.
pub(crate) fn read_f32_vec<R: Read>(r: &mut R, count: usize) -> Result<Vec<f64>, FormatError> {
    const CHUNK: usize = 1 << 16;
    let mut out = Vec::with_capacity(count.min(CHUNK));
    let mut buf = vec![0f32; CHUNK.min(count.max(1))];
    let mut left = count;
    while left > 0 {
        let n = left.min(CHUNK);
        r.read_f32_into::<LittleEndian>(&mut buf[..n])?;
        out.extend(buf[..n].iter().map(|&v| v as f64));
        left -= n;
    }
    Ok(out)
}
