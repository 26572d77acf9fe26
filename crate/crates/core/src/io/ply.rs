//! PLY reading (ASCII and binary little-endian) and writing.
//!
//! Vertex elements may carry `x y z` and optionally `nx ny nz`; a `face`
//! element with a `vertex_indices` (or `vertex_index`) list is read as
//! polygons and fan-triangulated. Other elements and properties are skipped.

use std::fmt::Write as _;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};

use crate::error::{Error, Result};
use crate::geometry::Vec3;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => LittleEndian::read_i16(b) as f64,
            Scalar::U16 => LittleEndian::read_u16(b) as f64,
            Scalar::I32 => LittleEndian::read_i32(b) as f64,
            Scalar::U32 => LittleEndian::read_u32(b) as f64,
            Scalar::F32 => LittleEndian::read_f32(b) as f64,
            Scalar::F64 => LittleEndian::read_f64(b),
        }
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

/// Contents of a PLY file relevant to this crate.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlyData {
    pub positions: Vec<Vec3>,
    pub normals: Option<Vec<Vec3>>,
    pub faces: Vec<Vec<usize>>,
}

pub fn parse_ply(bytes: &[u8], path: &Path) -> Result<PlyData> {
    let (format, elements, body_start) = parse_header(bytes, path)?;
    let mut data = PlyData::default();
    let mut values: Vec<f64> = Vec::new();
    let mut reader: Box<dyn ValueReader> = match format {
        PlyFormat::Ascii => Box::new(AsciiReader::new(&bytes[body_start..], path)?),
        PlyFormat::BinaryLittleEndian => Box::new(BinaryReader {
            bytes,
            pos: body_start,
            path,
        }),
    };
    for el in &elements {
        let xyz = ["x", "y", "z"].map(|n| scalar_index(el, n));
        let nxyz = ["nx", "ny", "nz"].map(|n| scalar_index(el, n));
        let is_vertex = el.name == "vertex";
        let has_normals = is_vertex && nxyz.iter().all(Option::is_some);
        if is_vertex {
            if xyz.iter().any(Option::is_none) {
                return Err(Error::malformed(path, "header", "vertex element lacks x/y/z"));
            }
            data.positions.reserve(el.count);
            if has_normals {
                data.normals = Some(Vec::with_capacity(el.count));
            }
        }
        let face_list = if el.name == "face" {
            el.properties.iter().position(|p| {
                matches!(p, Property::List { name, .. } if name == "vertex_indices" || name == "vertex_index")
            })
        } else {
            None
        };
        for _ in 0..el.count {
            values.clear();
            let mut face = Vec::new();
            for (pi, prop) in el.properties.iter().enumerate() {
                match prop {
                    Property::Scalar { ty, .. } => values.push(reader.next(*ty)?),
                    Property::List { count, item, .. } => {
                        let n = reader.next(*count)?;
                        if !(n >= 0.0) || n.fract() != 0.0 {
                            return Err(reader.error(format!("bad list length {n}")));
                        }
                        values.push(f64::NAN);
                        for _ in 0..n as usize {
                            let v = reader.next(*item)?;
                            if Some(pi) == face_list {
                                if !(v >= 0.0) || v.fract() != 0.0 {
                                    return Err(reader.error(format!("bad vertex index {v}")));
                                }
                                face.push(v as usize);
                            }
                        }
                    }
                }
            }
            if is_vertex {
                let [x, y, z] = xyz.map(|i| values[i.unwrap()]);
                data.positions.push(Vec3::new(x, y, z));
                if let Some(normals) = data.normals.as_mut() {
                    let [x, y, z] = nxyz.map(|i| values[i.unwrap()]);
                    normals.push(Vec3::new(x, y, z));
                }
            }
            if face_list.is_some() {
                data.faces.push(face);
            }
        }
    }
    Ok(data)
}

fn scalar_index(el: &Element, name: &str) -> Option<usize> {
    el.properties
        .iter()
        .position(|p| matches!(p, Property::Scalar { name: n, .. } if n == name))
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<(PlyFormat, Vec<Element>, usize)> {
    let mut pos = 0;
    let mut lineno = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::malformed(path, format!("line {}", lineno + 1), "unterminated header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| Error::malformed(path, format!("line {}", lineno + 1), "header is not UTF-8"))?
            .trim_end_matches('\r')
            .trim();
        pos += end + 1;
        lineno += 1;
        let loc = format!("line {lineno}");
        let toks: Vec<&str> = line.split_whitespace().collect();
        if lineno == 1 {
            if line != "ply" {
                return Err(Error::malformed(path, loc, "missing `ply` magic"));
            }
            continue;
        }
        match toks.as_slice() {
            ["format", "ascii", _] => format = Some(PlyFormat::Ascii),
            ["format", "binary_little_endian", _] => format = Some(PlyFormat::BinaryLittleEndian),
            ["format", other, ..] => {
                return Err(Error::malformed(path, loc, format!("unsupported format `{other}`")))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::malformed(path, loc.clone(), "bad element count"))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::malformed(path, loc.clone(), "property before element"))?;
                let (Some(count), Some(item)) = (Scalar::parse(count), Scalar::parse(item)) else {
                    return Err(Error::malformed(path, loc, "unknown list property type"));
                };
                el.properties.push(Property::List {
                    name: name.to_string(),
                    count,
                    item,
                });
            }
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::malformed(path, loc.clone(), "property before element"))?;
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| Error::malformed(path, loc.clone(), format!("unknown type `{ty}`")))?;
                el.properties.push(Property::Scalar {
                    name: name.to_string(),
                    ty,
                });
            }
            ["end_header"] => break,
            _ => return Err(Error::malformed(path, loc, format!("unexpected header line `{line}`"))),
        }
    }
    let format = format.ok_or_else(|| Error::malformed(path, "header", "missing format line"))?;
    Ok((format, elements, pos))
}

trait ValueReader {
    fn next(&mut self, ty: Scalar) -> Result<f64>;
    fn error(&self, message: String) -> Error;
}

struct BinaryReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl ValueReader for BinaryReader<'_> {
    fn next(&mut self, ty: Scalar) -> Result<f64> {
        let n = ty.size();
        if self.pos + n > self.bytes.len() {
            return Err(self.error("unexpected end of binary data".into()));
        }
        let v = ty.read(&self.bytes[self.pos..self.pos + n]);
        self.pos += n;
        Ok(v)
    }

    fn error(&self, message: String) -> Error {
        Error::malformed(self.path, format!("byte {}", self.pos), message)
    }
}

struct AsciiReader<'a> {
    tokens: Vec<(usize, &'a str)>,
    next: usize,
    path: &'a Path,
}

impl<'a> AsciiReader<'a> {
    fn new(body: &'a [u8], path: &'a Path) -> Result<Self> {
        let text = std::str::from_utf8(body)
            .map_err(|_| Error::malformed(path, "body", "ASCII body is not UTF-8"))?;
        let tokens = text
            .lines()
            .enumerate()
            .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i, t)))
            .collect();
        Ok(Self {
            tokens,
            next: 0,
            path,
        })
    }
}

impl ValueReader for AsciiReader<'_> {
    fn next(&mut self, _ty: Scalar) -> Result<f64> {
        let (_, tok) = *self
            .tokens
            .get(self.next)
            .ok_or_else(|| self.error("unexpected end of data".into()))?;
        let v = tok
            .parse()
            .map_err(|_| self.error(format!("bad number `{tok}`")))?;
        self.next += 1;
        Ok(v)
    }

    fn error(&self, message: String) -> Error {
        let line = self
            .tokens
            .get(self.next.min(self.tokens.len().saturating_sub(1)))
            .map_or(0, |t| t.0);
        Error::malformed(self.path, format!("body line {}", line + 1), message)
    }
}

/// Serializes vertices (with optional normals) and triangles.
pub fn format_ply(
    positions: &[Vec3],
    normals: Option<&[Vec3]>,
    triangles: &[[usize; 3]],
    format: PlyFormat,
) -> Vec<u8> {
    let mut header = String::from("ply\n");
    header.push_str(match format {
        PlyFormat::Ascii => "format ascii 1.0\n",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    let _ = writeln!(header, "element vertex {}", positions.len());
    for p in ["x", "y", "z"] {
        let _ = writeln!(header, "property double {p}");
    }
    if normals.is_some() {
        for p in ["nx", "ny", "nz"] {
            let _ = writeln!(header, "property double {p}");
        }
    }
    if !triangles.is_empty() {
        let _ = writeln!(header, "element face {}", triangles.len());
        header.push_str("property list uchar uint vertex_indices\n");
    }
    header.push_str("end_header\n");
    let mut out = header.into_bytes();
    match format {
        PlyFormat::Ascii => {
            let mut body = String::new();
            for (i, p) in positions.iter().enumerate() {
                let _ = write!(body, "{} {} {}", p.x, p.y, p.z);
                if let Some(n) = normals {
                    let _ = write!(body, " {} {} {}", n[i].x, n[i].y, n[i].z);
                }
                body.push('\n');
            }
            for t in triangles {
                let _ = writeln!(body, "3 {} {} {}", t[0], t[1], t[2]);
            }
            out.extend_from_slice(body.as_bytes());
        }
        PlyFormat::BinaryLittleEndian => {
            let mut buf = [0u8; 8];
            for (i, p) in positions.iter().enumerate() {
                let mut coords = vec![p.x, p.y, p.z];
                if let Some(n) = normals {
                    coords.extend_from_slice(&[n[i].x, n[i].y, n[i].z]);
                }
                for c in coords {
                    LittleEndian::write_f64(&mut buf, c);
                    out.extend_from_slice(&buf);
                }
            }
            for t in triangles {
                out.push(3);
                for &i in t {
                    LittleEndian::write_u32(&mut buf[..4], i as u32);
                    out.extend_from_slice(&buf[..4]);
                }
            }
        }
    }
    out
}
