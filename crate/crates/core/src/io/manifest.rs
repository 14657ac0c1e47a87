//! Scene manifests: a JSON file listing posed views and the SfM point cloud.
//!
//! ```json
//! {
//!   "version": 1,
//!   "sfm_points": "points.ply",
//!   "depth_scale": 0.001,
//!   "views": [{
//!     "name": "view_000",
//!     "image": "images/view_000.png",
//!     "width": 128, "height": 128,
//!     "fx": 140.0, "fy": 140.0, "cx": 64.0, "cy": 64.0,
//!     "rotation": [[1, 0, 0], [0, 1, 0], [0, 0, 1]],
//!     "translation": [0, 0, 3],
//!     "near": 0.01,
//!     "depth": "depth/view_000.png",
//!     "mask": "masks/view_000.png",
//!     "split": "train"
//!   }]
//! }
//! ```
//!
//! `rotation` and `translation` map world to camera coordinates (x right,
//! y down, z forward). Paths are relative to the manifest's directory. Depth
//! maps are 16-bit PNGs whose values times `depth_scale` give view-space depth;
//! zero marks missing depth. Masks are 8-bit PNGs, nonzero meaning set.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::image::{load_depth_png, load_mask, load_png_linear, Image};
use super::ply::read_ply;
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Mat3, Vec3};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ViewEntry {
    pub name: String,
    pub image: PathBuf,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub rotation: [[f64; 3]; 3],
    pub translation: [f64; 3],
    #[serde(default = "default_near")]
    pub near: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mask: Option<PathBuf>,
    #[serde(default)]
    pub split: Split,
}

fn default_near() -> f64 {
    0.01
}

fn default_depth_scale() -> f64 {
    1e-3
}

impl ViewEntry {
    pub fn from_camera(name: impl Into<String>, image: impl Into<PathBuf>, cam: &CameraModel, split: Split) -> Self {
        let r = &cam.rotation;
        ViewEntry {
            name: name.into(),
            image: image.into(),
            width: cam.width,
            height: cam.height,
            fx: cam.fx,
            fy: cam.fy,
            cx: cam.cx,
            cy: cam.cy,
            rotation: [0, 1, 2].map(|i| [r[(i, 0)], r[(i, 1)], r[(i, 2)]]),
            translation: [cam.translation.x, cam.translation.y, cam.translation.z],
            near: cam.near,
            depth: None,
            mask: None,
            split,
        }
    }

    pub fn camera(&self) -> Result<CameraModel> {
        let r = &self.rotation;
        let rotation = Mat3::new(r[0][0], r[0][1], r[0][2], r[1][0], r[1][1], r[1][2], r[2][0], r[2][1], r[2][2]);
        let t = Vec3::new(self.translation[0], self.translation[1], self.translation[2]);
        CameraModel::new(self.fx, self.fy, self.cx, self.cy, rotation, t, self.width, self.height, self.near)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    pub version: u32,
    pub sfm_points: PathBuf,
    #[serde(default = "default_depth_scale")]
    pub depth_scale: f64,
    pub views: Vec<ViewEntry>,
}

/// A decoded view. Images are in linear light.
#[derive(Clone, Debug)]
pub struct View {
    pub name: String,
    pub camera: CameraModel,
    pub image: Image,
    pub depth: Option<Vec<f64>>,
    pub mask: Option<Vec<bool>>,
    pub split: Split,
}

#[derive(Clone, Debug, Default)]
pub struct SfmPoint {
    pub position: Vec3,
    /// Linear RGB in `[0, 1]`; mid-grey when the PLY has no colors.
    pub color: [f64; 3],
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub views: Vec<View>,
    pub points: Vec<SfmPoint>,
}

impl Dataset {
    pub fn train_views(&self) -> impl Iterator<Item = &View> + '_ {
        self.views.iter().filter(|v| v.split == Split::Train)
    }

    pub fn test_views(&self) -> impl Iterator<Item = &View> + '_ {
        self.views.iter().filter(|v| v.split == Split::Test)
    }
}

/// Parses and validates the manifest without decoding any image.
pub fn read_manifest(path: &Path) -> Result<SceneManifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let m: SceneManifest = serde_json::from_str(&text).map_err(|e| Error::format(path, e.to_string()))?;
    if m.version != MANIFEST_VERSION {
        return Err(Error::format(
            path,
            format!("unsupported manifest version {} (expected {MANIFEST_VERSION})", m.version),
        ));
    }
    if !(m.depth_scale > 0.0 && m.depth_scale.is_finite()) {
        return Err(Error::format(path, format!("depth_scale must be positive, got {}", m.depth_scale)));
    }
    for v in &m.views {
        v.camera().map_err(|e| Error::format(path, format!("view `{}`: {e}", v.name)))?;
    }
    Ok(m)
}

pub fn save_manifest(path: &Path, m: &SceneManifest) -> Result<()> {
    let text = serde_json::to_string_pretty(m).expect("manifest serialises");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Reads the manifest and decodes every referenced file.
pub fn load_manifest(path: &Path) -> Result<(SceneManifest, Dataset)> {
    let m = read_manifest(path)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let views = m
        .views
        .par_iter()
        .map(|v| load_view(base, v, m.depth_scale))
        .collect::<Result<Vec<_>>>()?;
    let ply = read_ply(&base.join(&m.sfm_points))?;
    let points = match &ply.colors {
        Some(c) => ply
            .positions
            .iter()
            .zip(c)
            .map(|(p, c)| SfmPoint {
                position: *p,
                color: c.map(|v| super::image::srgb_to_linear(v as f64 / 255.0)),
            })
            .collect(),
        None => ply.positions.iter().map(|p| SfmPoint { position: *p, color: [0.5; 3] }).collect(),
    };
    Ok((m, Dataset { views, points }))
}

fn load_view(base: &Path, v: &ViewEntry, depth_scale: f64) -> Result<View> {
    let named = |e: Error| match e {
        Error::Io { path, source } => Error::Io { path, source },
        other => Error::InvalidInput(format!("view `{}`: {other}", v.name)),
    };
    let camera = v.camera().map_err(named)?;
    let check = |p: &Path, w: u32, h: u32| {
        if (w, h) == (v.width, v.height) {
            Ok(())
        } else {
            Err(Error::format(p, format!("view `{}`: size {w}x{h}, manifest says {}x{}", v.name, v.width, v.height)))
        }
    };
    let ip = base.join(&v.image);
    let image = load_png_linear(&ip)?;
    check(&ip, image.width, image.height)?;
    let depth = match &v.depth {
        Some(p) => {
            let p = base.join(p);
            let (w, h, d) = load_depth_png(&p, depth_scale)?;
            check(&p, w, h)?;
            Some(d)
        }
        None => None,
    };
    let mask = match &v.mask {
        Some(p) => {
            let p = base.join(p);
            let (w, h, m) = load_mask(&p)?;
            check(&p, w, h)?;
            Some(m)
        }
        None => None,
    };
    Ok(View { name: v.name.clone(), camera, image, depth, mask, split: v.split })
}
