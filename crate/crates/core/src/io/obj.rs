//! Wavefront OBJ with per-vertex colors (`v x y z r g b`).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::Face;

pub fn write_obj(path: &Path, positions: &[Vec3], colors: &[[f64; 3]], faces: &[Face]) -> Result<()> {
    if colors.len() != positions.len() {
        return Err(Error::shape(positions.len(), colors.len()));
    }
    let mut s = String::with_capacity(positions.len() * 48 + faces.len() * 24);
    for (p, c) in positions.iter().zip(colors) {
        writeln!(s, "v {} {} {} {} {} {}", p.x, p.y, p.z, c[0], c[1], c[2]).unwrap();
    }
    for f in faces {
        writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1).unwrap();
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Reads positions, optional vertex colors and faces (fan-triangulating polygons).
pub fn read_obj(path: &Path) -> Result<(Vec<Vec3>, Vec<Option<[f64; 3]>>, Vec<Face>)> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |line: usize, msg: &str| Error::format(path, format!("line {}: {msg}", line + 1));
    let mut pos = Vec::new();
    let mut col = Vec::new();
    let mut faces = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let mut t = line.split_whitespace();
        match t.next() {
            Some("v") => {
                let v: Vec<f64> = t.map(|x| x.parse::<f64>()).collect::<std::result::Result<_, _>>().map_err(|_| bad(ln, "bad number"))?;
                if v.len() < 3 {
                    return Err(bad(ln, "vertex needs three coordinates"));
                }
                pos.push(Vec3::new(v[0], v[1], v[2]));
                col.push((v.len() >= 6).then(|| [v[3], v[4], v[5]]));
            }
            Some("f") => {
                let idx: Vec<u32> = t
                    .map(|x| {
                        let first = x.split('/').next().unwrap_or("");
                        first.parse::<i64>().ok().and_then(|i| {
                            let i = if i < 0 { pos.len() as i64 + i } else { i - 1 };
                            (0..pos.len() as i64).contains(&i).then_some(i as u32)
                        })
                    })
                    .collect::<Option<_>>()
                    .ok_or_else(|| bad(ln, "bad face index"))?;
                if idx.len() < 3 {
                    return Err(bad(ln, "face needs three vertices"));
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Ok((pos, col, faces))
}
