//! Datasets, images, meshes and checkpoints on disk.

pub mod checkpoint;
pub mod image;
pub mod manifest;
pub mod obj;
pub mod ply;

use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::{Face, Scene, TriangleTopology, VertexSet};
use crate::sh::{dc_color, rgb_to_dc, SH_BASIS, SH_COEFFS};

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use manifest::{load_manifest, save_manifest, Dataset, SceneManifest, SfmPoint, Split, View, ViewEntry};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MeshFormat {
    Ply,
    Obj,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path.extension().and_then(|e| e.to_str()).map(|e| e.to_ascii_lowercase()).as_deref() {
            Some("ply") => Ok(MeshFormat::Ply),
            Some("obj") => Ok(MeshFormat::Obj),
            _ => Err(Error::format(path, "mesh extension must be .ply or .obj")),
        }
    }
}

/// Per-vertex sRGB colors baked from the view-independent SH term.
pub fn baked_colors(scene: &Scene) -> Vec<[f64; 3]> {
    scene.vertices.sh.iter().map(|c| dc_color(c).map(image::linear_to_srgb)).collect()
}

/// Writes the mesh with baked vertex colors. Opacity is not exported.
pub fn export_mesh(scene: &Scene, path: &Path, format: MeshFormat) -> Result<()> {
    let colors = baked_colors(scene);
    let pos = &scene.vertices.positions;
    let faces = &scene.topology.faces;
    match format {
        MeshFormat::Ply => {
            let c8: Vec<[u8; 3]> = colors.iter().map(|c| c.map(image::to_u8)).collect();
            ply::write_ply(path, pos, &c8, faces)
        }
        MeshFormat::Obj => obj::write_obj(path, pos, &colors, faces),
    }
}

/// Opacity logit given to vertices of imported meshes.
pub const IMPORTED_OPACITY_LOGIT: f64 = 8.0;
/// Window sharpness given to imported meshes.
pub const IMPORTED_SIGMA: f64 = 1e-4;

/// Reads a PLY or OBJ mesh as an opaque scene whose DC color is the
/// (sRGB-decoded) vertex color, mid-grey when absent.
pub fn load_mesh(path: &Path) -> Result<Scene> {
    let (positions, colors, faces): (Vec<Vec3>, Vec<[f64; 3]>, Vec<Face>) = match MeshFormat::from_path(path)? {
        MeshFormat::Ply => {
            let m = ply::read_ply(path)?;
            let colors = match m.colors {
                Some(c) => c.iter().map(|c| c.map(|v| v as f64 / 255.0)).collect(),
                None => vec![[0.5; 3]; m.positions.len()],
            };
            (m.positions, colors, m.faces)
        }
        MeshFormat::Obj => {
            let (p, c, f) = obj::read_obj(path)?;
            (p, c.into_iter().map(|c| c.unwrap_or([0.5; 3])).collect(), f)
        }
    };
    let mut vs = VertexSet::with_capacity(positions.len());
    for (p, c) in positions.iter().zip(&colors) {
        let mut sh = [0.0; SH_COEFFS];
        for k in 0..3 {
            sh[k * SH_BASIS] = rgb_to_dc(image::srgb_to_linear(c[k].clamp(0.0, 1.0)));
        }
        vs.push(*p, sh, IMPORTED_OPACITY_LOGIT);
    }
    Scene::new(vs, TriangleTopology { faces, shared_sigma: IMPORTED_SIGMA }).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn red_triangle() -> Scene {
        let mut vs = VertexSet::default();
        let mut sh = [0.0; SH_COEFFS];
        sh[0] = rgb_to_dc(1.0);
        sh[SH_BASIS] = rgb_to_dc(0.0);
        sh[2 * SH_BASIS] = rgb_to_dc(0.0);
        for p in [Vec3::zeros(), Vec3::x(), Vec3::y()] {
            vs.push(p, sh, 0.0);
        }
        Scene::new(vs, TriangleTopology { faces: vec![[0, 1, 2]], shared_sigma: 1.0 }).unwrap()
    }

    #[test]
    fn red_triangle_ply() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.ply");
        export_mesh(&red_triangle(), &p, MeshFormat::Ply).unwrap();
        let m = ply::read_ply(&p).unwrap();
        assert_eq!(m.positions.len(), 3);
        assert_eq!(m.colors.unwrap(), vec![[255, 0, 0]; 3]);
        assert_eq!(m.faces, vec![[0, 1, 2]]);
        let back = load_mesh(&p).unwrap();
        assert_eq!(back.topology.faces, vec![[0, 1, 2]]);
        assert!((dc_color(&back.vertices.sh[0])[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_scene_obj_and_format_detection() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("e.obj");
        export_mesh(&Scene::default(), &p, MeshFormat::from_path(&p).unwrap()).unwrap();
        let (v, _, f) = obj::read_obj(&p).unwrap();
        assert!(v.is_empty() && f.is_empty());
        assert!(MeshFormat::from_path(Path::new("x.stl")).is_err());
    }
}
