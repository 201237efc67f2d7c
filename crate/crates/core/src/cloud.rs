//! Point clouds and their ASCII XYZ / binary PLY loaders.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::Vector3;

use crate::format::FormatError;
use crate::geometry::Pose;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    points: Vec<Vector3<f64>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vector3<f64>>) -> Self {
        Self { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vector3<f64>] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Vector3<f64>> {
        self.points.iter()
    }

    pub fn transformed(&self, pose: &Pose) -> PointCloud {
        PointCloud::new(self.points.iter().map(|p| pose.transform_point(p)).collect())
    }

    pub fn centroid(&self) -> Option<Vector3<f64>> {
        if self.points.is_empty() {
            return None;
        }
        Some(self.points.iter().sum::<Vector3<f64>>() / self.points.len() as f64)
    }

    /// Raw storage at 3 floats of `bytes_per_scalar` each.
    pub fn memory_bytes(&self, bytes_per_scalar: usize) -> usize {
        3 * self.points.len() * bytes_per_scalar
    }

    /// Loads `.ply` files as PLY and everything else as XYZ.
    pub fn load(path: impl AsRef<Path>) -> Result<PointCloud, FormatError> {
        let path = path.as_ref();
        let file = BufReader::new(std::fs::File::open(path)?);
        let is_ply = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("ply"));
        if is_ply {
            read_ply(file)
        } else {
            read_xyz(file)
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), FormatError> {
        let path = path.as_ref();
        let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
        let is_ply = path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("ply"));
        if is_ply {
            write_ply(&mut file, self)?;
        } else {
            write_xyz(&mut file, self)?;
        }
        file.flush()?;
        Ok(())
    }
}

impl FromIterator<Vector3<f64>> for PointCloud {
    fn from_iter<T: IntoIterator<Item = Vector3<f64>>>(iter: T) -> Self {
        PointCloud::new(iter.into_iter().collect())
    }
}

/// One `x y z` triple per line; blank lines and `#` comments are skipped,
/// extra columns are ignored.
pub fn read_xyz<R: BufRead>(reader: R) -> Result<PointCloud, FormatError> {
    let mut points = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut it = line.split(|c: char| c.is_whitespace() || c == ',').filter(|s| !s.is_empty());
        let mut xyz = [0.0; 3];
        for v in &mut xyz {
            let tok = it.next().ok_or_else(|| FormatError::Parse {
                line: n + 1,
                msg: "expected three coordinates".into(),
            })?;
            *v = tok.parse().map_err(|_| FormatError::Parse {
                line: n + 1,
                msg: format!("invalid number {tok:?}"),
            })?;
        }
        points.push(Vector3::from(xyz));
    }
    Ok(PointCloud::new(points))
}

pub fn write_xyz<W: Write>(mut w: W, cloud: &PointCloud) -> Result<(), FormatError> {
    for p in cloud.iter() {
        writeln!(w, "{:.9} {:.9} {:.9}", p.x, p.y, p.z)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum PlyType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl PlyType {
    fn parse(s: &str) -> Option<PlyType> {
        Some(match s {
            "char" | "int8" => PlyType::I8,
            "uchar" | "uint8" => PlyType::U8,
            "short" | "int16" => PlyType::I16,
            "ushort" | "uint16" => PlyType::U16,
            "int" | "int32" => PlyType::I32,
            "uint" | "uint32" => PlyType::U32,
            "float" | "float32" => PlyType::F32,
            "double" | "float64" => PlyType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            PlyType::I8 | PlyType::U8 => 1,
            PlyType::I16 | PlyType::U16 => 2,
            PlyType::I32 | PlyType::U32 | PlyType::F32 => 4,
            PlyType::F64 => 8,
        }
    }

    fn read<R: Read>(self, r: &mut R) -> std::io::Result<f64> {
        Ok(match self {
            PlyType::I8 => r.read_i8()? as f64,
            PlyType::U8 => r.read_u8()? as f64,
            PlyType::I16 => r.read_i16::<LittleEndian>()? as f64,
            PlyType::U16 => r.read_u16::<LittleEndian>()? as f64,
            PlyType::I32 => r.read_i32::<LittleEndian>()? as f64,
            PlyType::U32 => r.read_u32::<LittleEndian>()? as f64,
            PlyType::F32 => r.read_f32::<LittleEndian>()? as f64,
            PlyType::F64 => r.read_f64::<LittleEndian>()?,
        })
    }
}

#[derive(Debug)]
enum PlyProperty {
    Scalar { name: String, ty: PlyType },
    List { count: PlyType, item: PlyType },
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<PlyProperty>,
}

/// Binary little-endian PLY. Reads `x`, `y`, `z` from the `vertex` element and
/// skips every other property and element.
pub fn read_ply<R: BufRead>(mut r: R) -> Result<PointCloud, FormatError> {
    let elements = read_ply_header(&mut r)?;
    let mut points = Vec::new();
    for el in &elements {
        if el.name != "vertex" {
            // Elements after the vertices are never needed.
            if points.is_empty() {
                skip_element(&mut r, el)?;
                continue;
            }
            break;
        }
        let slot = |axis: &str| {
            el.properties.iter().position(|p| matches!(p, PlyProperty::Scalar { name, ty } if name == axis && matches!(ty, PlyType::F32 | PlyType::F64)))
        };
        let (Some(ix), Some(iy), Some(iz)) = (slot("x"), slot("y"), slot("z")) else {
            return Err(FormatError::Unsupported("vertex element lacks float x, y, z".into()));
        };
        points.reserve(el.count.min(1 << 24));
        for _ in 0..el.count {
            let mut xyz = [0.0; 3];
            for (pi, prop) in el.properties.iter().enumerate() {
                match prop {
                    PlyProperty::Scalar { ty, .. } => {
                        let v = ty.read(&mut r)?;
                        if pi == ix {
                            xyz[0] = v;
                        } else if pi == iy {
                            xyz[1] = v;
                        } else if pi == iz {
                            xyz[2] = v;
                        }
                    }
                    PlyProperty::List { count, item } => {
                        let n = count.read(&mut r)? as usize;
                        skip_bytes(&mut r, n * item.size())?;
                    }
                }
            }
            points.push(Vector3::from(xyz));
        }
    }
    Ok(PointCloud::new(points))
}

fn read_ply_header<R: BufRead>(r: &mut R) -> Result<Vec<PlyElement>, FormatError> {
    let mut line = String::new();
    let mut lineno = 0;
    let mut next_line = |r: &mut R, line: &mut String| -> Result<usize, FormatError> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(FormatError::Corrupt("unterminated PLY header"));
        }
        lineno += 1;
        Ok(lineno)
    };
    next_line(r, &mut line)?;
    if line.trim_end() != "ply" {
        return Err(FormatError::Corrupt("missing PLY signature"));
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut format_ok = false;
    loop {
        let n = next_line(r, &mut line)?;
        let toks: Vec<&str> = line.split_whitespace().collect();
        let parse_err = |msg: &str| FormatError::Parse { line: n, msg: msg.to_string() };
        match toks.as_slice() {
            ["end_header"] => break,
            ["format", fmt, _version] => {
                if *fmt != "binary_little_endian" {
                    return Err(FormatError::Unsupported(format!("PLY format {fmt}")));
                }
                format_ok = true;
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(PlyElement {
                name: name.to_string(),
                count: count.parse().map_err(|_| parse_err("bad element count"))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, _name] => {
                let el = elements.last_mut().ok_or_else(|| parse_err("property before element"))?;
                el.properties.push(PlyProperty::List {
                    count: PlyType::parse(count).ok_or_else(|| parse_err("bad list count type"))?,
                    item: PlyType::parse(item).ok_or_else(|| parse_err("bad list item type"))?,
                });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| parse_err("property before element"))?;
                el.properties.push(PlyProperty::Scalar {
                    name: name.to_string(),
                    ty: PlyType::parse(ty).ok_or_else(|| parse_err("bad property type"))?,
                });
            }
            _ => return Err(parse_err("unrecognized header line")),
        }
    }
    if !format_ok {
        return Err(FormatError::Corrupt("PLY header lacks a format line"));
    }
    Ok(elements)
}

fn skip_element<R: Read>(r: &mut R, el: &PlyElement) -> Result<(), FormatError> {
    for _ in 0..el.count {
        for prop in &el.properties {
            match prop {
                PlyProperty::Scalar { ty, .. } => skip_bytes(r, ty.size())?,
                PlyProperty::List { count, item } => {
                    let n = count.read(r)? as usize;
                    skip_bytes(r, n * item.size())?;
                }
            }
        }
    }
    Ok(())
}

fn skip_bytes<R: Read>(r: &mut R, n: usize) -> Result<(), FormatError> {
    let copied = std::io::copy(&mut r.take(n as u64), &mut std::io::sink())?;
    if copied as usize != n {
        return Err(FormatError::Io(std::io::ErrorKind::UnexpectedEof.into()));
    }
    Ok(())
}

/// Binary little-endian PLY with float `x y z` vertices.
pub fn write_ply<W: Write>(mut w: W, cloud: &PointCloud) -> Result<(), FormatError> {
    write!(
        w,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        cloud.len()
    )?;
    for p in cloud.iter() {
        for v in p.iter() {
            w.write_f32::<LittleEndian>(*v as f32)?;
        }
    }
    Ok(())
}
