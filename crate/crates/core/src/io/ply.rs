//! PLY meshes and point clouds: binary little-endian writer, ASCII/binary reader.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::Face;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlyMesh {
    pub positions: Vec<Vec3>,
    /// 8-bit vertex colors if the file has `red green blue`.
    pub colors: Option<Vec<[u8; 3]>>,
    pub faces: Vec<Face>,
}

/// Writes vertex `x y z red green blue` and `face vertex_indices` as binary little-endian.
pub fn write_ply(path: &Path, positions: &[Vec3], colors: &[[u8; 3]], faces: &[Face]) -> Result<()> {
    if colors.len() != positions.len() {
        return Err(Error::shape(positions.len(), colors.len()));
    }
    let mut buf = Vec::with_capacity(128 + positions.len() * 15 + faces.len() * 13);
    write!(
        buf,
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\n\
         property uchar red\nproperty uchar green\nproperty uchar blue\nelement face {}\n\
         property list uchar int vertex_indices\nend_header\n",
        positions.len(),
        faces.len()
    )
    .expect("writing to a Vec cannot fail");
    for (p, c) in positions.iter().zip(colors) {
        for v in p.iter() {
            buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        buf.extend_from_slice(c);
    }
    for f in faces {
        buf.push(3);
        for &i in f {
            buf.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

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
    fn parse(s: &str) -> Option<Scalar> {
        Some(match s {
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
}

#[derive(Clone, Debug)]
enum Property {
    Scalar(String, Scalar),
    List(String, Scalar, Scalar),
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

#[derive(Clone, Copy, PartialEq)]
enum Encoding {
    Ascii,
    Little,
    Big,
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
    enc: Encoding,
    tokens: std::str::SplitAsciiWhitespace<'a>,
}

impl<'a> Reader<'a> {
    fn read(&mut self, t: Scalar) -> std::result::Result<f64, String> {
        if self.enc == Encoding::Ascii {
            let tok = self.tokens.next().ok_or("unexpected end of data")?;
            return tok.parse::<f64>().map_err(|_| format!("bad number `{tok}`"));
        }
        let n = t.size();
        let bytes = self.data.get(self.pos..self.pos + n).ok_or("unexpected end of data")?;
        self.pos += n;
        let mut b = [0u8; 8];
        b[..n].copy_from_slice(bytes);
        if self.enc == Encoding::Big {
            b[..n].reverse();
        }
        Ok(match t {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b),
        })
    }
}

/// Reads vertices (x, y, z, optional red/green/blue) and triangular faces.
/// Polygons with more than three corners are fan-triangulated.
pub fn read_ply(path: &Path) -> Result<PlyMesh> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&data).map_err(|m| Error::format(path, m))
}

fn parse_ply(data: &[u8]) -> std::result::Result<PlyMesh, String> {
    let end = data
        .windows(11)
        .position(|w| w == b"end_header\n")
        .ok_or("missing end_header")?;
    let header = std::str::from_utf8(&data[..end]).map_err(|_| "header is not UTF-8")?;
    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err("missing `ply` magic".into());
    }
    let mut enc = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let t: Vec<&str> = line.split_whitespace().collect();
        match t.as_slice() {
            ["format", f, _] => {
                enc = Some(match *f {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::Little,
                    "binary_big_endian" => Encoding::Big,
                    other => return Err(format!("unsupported format `{other}`")),
                })
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| format!("bad element count `{count}`"))?,
                props: Vec::new(),
            }),
            ["property", "list", ct, it, name] => {
                let el = elements.last_mut().ok_or("property before element")?;
                let ct = Scalar::parse(ct).ok_or_else(|| format!("unknown type `{ct}`"))?;
                let it = Scalar::parse(it).ok_or_else(|| format!("unknown type `{it}`"))?;
                el.props.push(Property::List(name.to_string(), ct, it));
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or("property before element")?;
                let ty = Scalar::parse(ty).ok_or_else(|| format!("unknown type `{ty}`"))?;
                el.props.push(Property::Scalar(name.to_string(), ty));
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            _ => return Err(format!("unrecognised header line `{line}`")),
        }
    }
    let enc = enc.ok_or("missing format line")?;
    let body = &data[end + 11..];
    let text = if enc == Encoding::Ascii {
        std::str::from_utf8(body).map_err(|_| "ASCII body is not UTF-8")?
    } else {
        ""
    };
    let mut r = Reader { data: body, pos: 0, enc, tokens: text.split_ascii_whitespace() };
    let mut mesh = PlyMesh::default();
    for el in &elements {
        let is_vertex = el.name == "vertex";
        let is_face = el.name == "face";
        let has_rgb = is_vertex
            && ["red", "green", "blue"]
                .iter()
                .all(|c| el.props.iter().any(|p| matches!(p, Property::Scalar(n, _) if n == c)));
        if has_rgb {
            mesh.colors = Some(Vec::with_capacity(el.count));
        }
        for _ in 0..el.count {
            let mut xyz = [0.0; 3];
            let mut rgb = [0u8; 3];
            for p in &el.props {
                match p {
                    Property::Scalar(name, ty) => {
                        let v = r.read(*ty)?;
                        if is_vertex {
                            match name.as_str() {
                                "x" => xyz[0] = v,
                                "y" => xyz[1] = v,
                                "z" => xyz[2] = v,
                                "red" | "green" | "blue" => {
                                    let c = if matches!(ty, Scalar::F32 | Scalar::F64) { v * 255.0 } else { v };
                                    let k = ["red", "green", "blue"].iter().position(|n| n == name).unwrap();
                                    rgb[k] = c.round().clamp(0.0, 255.0) as u8;
                                }
                                _ => {}
                            }
                        }
                    }
                    Property::List(name, ct, it) => {
                        let n = r.read(*ct)? as usize;
                        let mut idx = Vec::with_capacity(n);
                        for _ in 0..n {
                            idx.push(r.read(*it)?);
                        }
                        if is_face && (name == "vertex_indices" || name == "vertex_index") {
                            if n < 3 {
                                return Err(format!("face with {n} vertices"));
                            }
                            for k in 1..n - 1 {
                                mesh.faces.push([idx[0] as u32, idx[k] as u32, idx[k + 1] as u32]);
                            }
                        }
                    }
                }
            }
            if is_vertex {
                mesh.positions.push(Vec3::new(xyz[0], xyz[1], xyz[2]));
                if let Some(c) = mesh.colors.as_mut() {
                    c.push(rgb);
                }
            }
        }
    }
    let n = mesh.positions.len();
    if let Some(f) = mesh.faces.iter().find(|f| f.iter().any(|&i| i as usize >= n)) {
        return Err(format!("face {f:?} references a missing vertex"));
    }
    Ok(mesh)
}
