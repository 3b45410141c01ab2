//! Minimal PLY reader/writer for colored vertex clouds.
//!
//! Reads ASCII and binary little-endian files whose `vertex` element carries
//! `x`, `y`, `z` (float or double) and `red`, `green`, `blue` (uchar). Other
//! properties and elements are skipped. Writes binary little-endian with
//! double coordinates so positions survive a round-trip bit for bit.

use std::io::Write;
use std::path::Path;

use super::PointCloud;
use crate::camera::Vec3;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
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

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Clone, Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Format {
    Ascii,
    BinaryLe,
}

struct Header {
    format: Format,
    elements: Vec<Element>,
    data_offset: usize,
    /// Number of header lines, for ASCII line numbers.
    lines: usize,
}

fn parse_header(bytes: &[u8], path: &Path) -> Result<Header> {
    let err = |line: usize, msg: String| Error::parse(path, format!("line {line}: {msg}"));
    let mut offset = 0;
    let mut line_no = 0;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let end = bytes[offset..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| err(line_no + 1, "header is not terminated by end_header".into()))?;
        let raw = &bytes[offset..offset + end];
        offset += end + 1;
        line_no += 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| err(line_no, "header is not valid UTF-8".into()))?
            .trim_end_matches('\r')
            .trim();
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if line_no == 1 {
            if line != "ply" {
                return Err(err(1, "missing `ply` magic".into()));
            }
            continue;
        }
        match tokens.first().copied() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                format = Some(match tokens.get(1).copied() {
                    Some("ascii") => Format::Ascii,
                    Some("binary_little_endian") => Format::BinaryLe,
                    Some(other) => {
                        return Err(Error::Unsupported(format!(
                            "{}: PLY format `{other}`",
                            path.display()
                        )))
                    }
                    None => return Err(err(line_no, "format line has no format".into())),
                });
            }
            Some("element") => {
                if tokens.len() != 3 {
                    return Err(err(line_no, format!("malformed element line `{line}`")));
                }
                let count = tokens[2]
                    .parse()
                    .map_err(|_| err(line_no, format!("bad element count `{}`", tokens[2])))?;
                elements.push(Element {
                    name: tokens[1].to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| err(line_no, "property before any element".into()))?;
                let ty = |name: &str| {
                    Scalar::parse(name)
                        .ok_or_else(|| err(line_no, format!("unknown property type `{name}`")))
                };
                let prop = match tokens.as_slice() {
                    ["property", "list", count, item, _name] => Property::List {
                        count: ty(count)?,
                        item: ty(item)?,
                    },
                    ["property", t, name] => Property::Scalar {
                        name: name.to_string(),
                        ty: ty(t)?,
                    },
                    _ => return Err(err(line_no, format!("malformed property line `{line}`"))),
                };
                element.properties.push(prop);
            }
            Some("end_header") => break,
            Some(other) => return Err(err(line_no, format!("unexpected header keyword `{other}`"))),
        }
    }
    let format = format.ok_or_else(|| err(line_no, "header has no format line".into()))?;
    Ok(Header {
        format,
        elements,
        data_offset: offset,
        lines: line_no,
    })
}

struct VertexLayout {
    xyz: [usize; 3],
    rgb: [usize; 3],
}

fn vertex_layout(element: &Element, path: &Path) -> Result<VertexLayout> {
    let find = |want: &str| -> Result<(usize, Scalar)> {
        element
            .properties
            .iter()
            .enumerate()
            .find_map(|(i, p)| match p {
                Property::Scalar { name, ty } if name == want => Some((i, *ty)),
                _ => None,
            })
            .ok_or_else(|| {
                Error::parse(path, format!("vertex element is missing property `{want}`"))
            })
    };
    let mut xyz = [0; 3];
    for (slot, name) in xyz.iter_mut().zip(["x", "y", "z"]) {
        let (i, ty) = find(name)?;
        if !matches!(ty, Scalar::F32 | Scalar::F64) {
            return Err(Error::Unsupported(format!(
                "{}: coordinate `{name}` must be float or double",
                path.display()
            )));
        }
        *slot = i;
    }
    let mut rgb = [0; 3];
    for (slot, name) in rgb.iter_mut().zip(["red", "green", "blue"]) {
        let (i, ty) = find(name)?;
        if ty != Scalar::U8 {
            return Err(Error::Unsupported(format!(
                "{}: color `{name}` must be uchar",
                path.display()
            )));
        }
        *slot = i;
    }
    Ok(VertexLayout { xyz, rgb })
}

fn assemble(rows: Vec<Vec<f64>>, layout: &VertexLayout) -> (Vec<Vec3>, Vec<[f64; 3]>) {
    let mut positions = Vec::with_capacity(rows.len());
    let mut colors = Vec::with_capacity(rows.len());
    for row in rows {
        positions.push(Vec3::new(row[layout.xyz[0]], row[layout.xyz[1]], row[layout.xyz[2]]));
        colors.push(layout.rgb.map(|i| row[i] / 255.0));
    }
    (positions, colors)
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingFile(path.to_path_buf()));
    }
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let header = parse_header(&bytes, path)?;
    let vertex_idx = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::parse(path, "no `vertex` element"))?;
    let layout = vertex_layout(&header.elements[vertex_idx], path)?;
    let body = &bytes[header.data_offset..];
    let rows = match header.format {
        Format::Ascii => read_ascii(body, &header, vertex_idx, path)?,
        Format::BinaryLe => read_binary(body, &header, vertex_idx, path)?,
    };
    let (positions, colors) = assemble(rows, &layout);
    PointCloud::new(positions, colors).map_err(|e| Error::parse(path, e.to_string()))
}

fn read_ascii(body: &[u8], header: &Header, vertex_idx: usize, path: &Path) -> Result<Vec<Vec<f64>>> {
    let text = std::str::from_utf8(body).map_err(|_| Error::parse(path, "ASCII body is not UTF-8"))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + header.lines + 1, l))
        .filter(|(_, l)| !l.trim().is_empty());
    let mut vertices = Vec::new();
    for (ei, element) in header.elements.iter().enumerate().take(vertex_idx + 1) {
        for _ in 0..element.count {
            let (line_no, line) = lines.next().ok_or_else(|| {
                Error::parse(path, format!("unexpected end of file in element `{}`", element.name))
            })?;
            let err = |msg: String| Error::parse(path, format!("line {line_no}: {msg}"));
            let mut tokens = line.split_whitespace();
            let mut next = || -> Result<f64> {
                let tok = tokens.next().ok_or_else(|| err("too few values".into()))?;
                tok.parse::<f64>().map_err(|_| err(format!("bad number `{tok}`")))
            };
            let mut row = Vec::with_capacity(element.properties.len());
            for prop in &element.properties {
                match prop {
                    Property::Scalar { .. } => row.push(next()?),
                    Property::List { .. } => {
                        let n = next()?;
                        if n < 0.0 || n.fract() != 0.0 {
                            return Err(err(format!("bad list length {n}")));
                        }
                        for _ in 0..n as usize {
                            next()?;
                        }
                        row.push(n);
                    }
                }
            }
            if ei == vertex_idx {
                vertices.push(row);
            }
        }
    }
    Ok(vertices)
}

fn read_binary(body: &[u8], header: &Header, vertex_idx: usize, path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut pos = 0usize;
    let mut take = |size: usize| -> Result<&[u8]> {
        if pos + size > body.len() {
            return Err(Error::parse(
                path,
                format!(
                    "byte offset {}: unexpected end of data",
                    header.data_offset + pos
                ),
            ));
        }
        let s = &body[pos..pos + size];
        pos += size;
        Ok(s)
    };
    let mut vertices = Vec::new();
    for (ei, element) in header.elements.iter().enumerate().take(vertex_idx + 1) {
        for _ in 0..element.count {
            let mut row = Vec::with_capacity(element.properties.len());
            for prop in &element.properties {
                match prop {
                    Property::Scalar { ty, .. } => row.push(ty.read_le(take(ty.size())?)),
                    Property::List { count, item } => {
                        let n = count.read_le(take(count.size())?);
                        if n < 0.0 {
                            return Err(Error::parse(path, format!("negative list length {n}")));
                        }
                        take(n as usize * item.size())?;
                        row.push(n);
                    }
                }
            }
            if ei == vertex_idx {
                vertices.push(row);
            }
        }
    }
    Ok(vertices)
}

/// Writes binary little-endian PLY. Colors are stored as 8-bit channels.
pub fn save_ply(cloud: &PointCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if cloud.is_empty() {
        return Err(Error::InvalidInput("refusing to write an empty point cloud".into()));
    }
    let mut out = Vec::with_capacity(cloud.len() * 27 + 256);
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\n\
         property double x\nproperty double y\nproperty double z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n",
        cloud.len()
    )
    .expect("writing to a Vec");
    for (p, c) in cloud.positions().iter().zip(cloud.colors()) {
        for v in p.iter() {
            out.extend_from_slice(&v.to_le_bytes());
        }
        for v in c {
            out.push((v * 255.0).round() as u8);
        }
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
