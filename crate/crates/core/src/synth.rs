//! Synthetic datasets with exact ground truth: a known mesh rendered opaque
//! at high supersampling from seeded cameras.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Vec3};
use crate::io::image::{linear_to_srgb, save_depth_png, save_mask, save_png_srgb, to_u8, Image};
use crate::io::manifest::{save_manifest, SceneManifest, Split, ViewEntry, MANIFEST_VERSION};
use crate::io::ply::write_ply;
use crate::io::{export_mesh, MeshFormat};
use crate::raster::{render, RenderSettings};
use crate::scene::{Face, Scene, TriangleTopology, VertexSet};
use crate::sh::{dc_color, rgb_to_dc, SH_BASIS, SH_COEFFS};

/// Window sharpness used for ground-truth renders.
pub const GT_SIGMA: f64 = 1e-4;
/// Stored depth value times this is view-space depth.
pub const DEPTH_SCALE: f64 = 1e-4;
/// Opacity logit of ground-truth vertices (irrelevant at O_t = 1).
const GT_LOGIT: f64 = 8.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SynthKind {
    SpherePlane,
    TwoSpheres,
    TexturedCube,
}

impl std::str::FromStr for SynthKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sphere-plane" => Ok(SynthKind::SpherePlane),
            "two-spheres" => Ok(SynthKind::TwoSpheres),
            "textured-cube" => Ok(SynthKind::TexturedCube),
            other => Err(Error::InvalidInput(format!(
                "unknown synthetic scene `{other}` (expected sphere-plane, two-spheres or textured-cube)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthOptions {
    pub kind: SynthKind,
    /// Training views; a fifth as many test views are added.
    pub views: u32,
    pub width: u32,
    pub height: u32,
    pub seed: u64,
    pub supersample: u32,
    pub points: usize,
}

impl SynthOptions {
    pub fn new(kind: SynthKind, views: u32, width: u32, height: u32) -> Self {
        SynthOptions { kind, views, width, height, seed: 0, supersample: 8, points: 1500 }
    }
}

/// Ground-truth mesh with the object each face belongs to. Object 0 is the
/// one the generated masks select.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub scene: Scene,
    pub face_object: Vec<u32>,
    pub look_at: Vec3,
    pub camera_radius: f64,
    /// Lowest camera elevation in radians; negative values allow views from below.
    pub min_elevation: f64,
}

struct MeshBuilder {
    vs: VertexSet,
    faces: Vec<Face>,
    objects: Vec<u32>,
}

impl MeshBuilder {
    fn new() -> Self {
        MeshBuilder { vs: VertexSet::default(), faces: Vec::new(), objects: Vec::new() }
    }

    fn vertex(&mut self, p: Vec3, rgb: [f64; 3]) -> u32 {
        let mut sh = [0.0; SH_COEFFS];
        for c in 0..3 {
            sh[c * SH_BASIS] = rgb_to_dc(rgb[c]);
        }
        self.vs.push(p, sh, GT_LOGIT)
    }

    fn face(&mut self, f: Face, object: u32) {
        self.faces.push(f);
        self.objects.push(object);
    }

    fn sphere(&mut self, center: Vec3, radius: f64, level: u32, object: u32, color: impl Fn(&Vec3) -> [f64; 3]) {
        let (dirs, faces) = icosphere(level);
        let base = self.vs.len() as u32;
        for d in &dirs {
            self.vertex(center + d * radius, color(d));
        }
        for f in faces {
            self.face(f.map(|i| i + base), object);
        }
    }

    /// Grid over `origin + s·u + t·v`, `s, t ∈ [0, 1]`, wound so the normal is `u × v`.
    fn grid(&mut self, origin: Vec3, u: Vec3, v: Vec3, n: u32, object: u32, color: impl Fn(&Vec3) -> [f64; 3]) {
        let base = self.vs.len() as u32;
        for j in 0..=n {
            for i in 0..=n {
                let p = origin + u * (i as f64 / n as f64) + v * (j as f64 / n as f64);
                self.vertex(p, color(&p));
            }
        }
        let id = |i: u32, j: u32| base + j * (n + 1) + i;
        for j in 0..n {
            for i in 0..n {
                self.face([id(i, j), id(i + 1, j), id(i + 1, j + 1)], object);
                self.face([id(i, j), id(i + 1, j + 1), id(i, j + 1)], object);
            }
        }
    }

    fn finish(self, look_at: Vec3, camera_radius: f64, min_elevation: f64) -> GroundTruth {
        let scene = Scene::new(self.vs, TriangleTopology { faces: self.faces, shared_sigma: GT_SIGMA })
            .expect("generated scene is valid");
        GroundTruth { scene, face_object: self.objects, look_at, camera_radius, min_elevation }
    }
}

/// Unit icosphere: `level` rounds of midpoint subdivision of an icosahedron.
pub fn icosphere(level: u32) -> (Vec<Vec3>, Vec<Face>) {
    let t = (1.0 + 5f64.sqrt()) / 2.0;
    let mut v: Vec<Vec3> = [
        (-1.0, t, 0.0),
        (1.0, t, 0.0),
        (-1.0, -t, 0.0),
        (1.0, -t, 0.0),
        (0.0, -1.0, t),
        (0.0, 1.0, t),
        (0.0, -1.0, -t),
        (0.0, 1.0, -t),
        (t, 0.0, -1.0),
        (t, 0.0, 1.0),
        (-t, 0.0, -1.0),
        (-t, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut f: Vec<Face> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..level {
        let mut mids: HashMap<(u32, u32), u32> = HashMap::new();
        let mut next = Vec::with_capacity(f.len() * 4);
        for tri in &f {
            let mut m = [0u32; 3];
            for k in 0..3 {
                let (a, b) = (tri[k], tri[(k + 1) % 3]);
                m[k] = *mids.entry((a.min(b), a.max(b))).or_insert_with(|| {
                    v.push(((v[a as usize] + v[b as usize]) * 0.5).normalize());
                    (v.len() - 1) as u32
                });
            }
            next.extend_from_slice(&[[tri[0], m[0], m[2]], [m[0], tri[1], m[1]], [m[2], m[1], tri[2]], [m[0], m[1], m[2]]]);
        }
        f = next;
    }
    (v, f)
}

fn clamp01(c: [f64; 3]) -> [f64; 3] {
    c.map(|v| v.clamp(0.02, 0.98))
}

pub fn ground_truth(kind: SynthKind) -> GroundTruth {
    let mut b = MeshBuilder::new();
    match kind {
        SynthKind::SpherePlane => {
            b.sphere(Vec3::new(0.0, 0.0, 0.55), 0.5, 3, 0, |d| {
                clamp01([0.55 + 0.35 * d.x, 0.5 + 0.3 * d.y, 0.45 + 0.35 * d.z])
            });
            b.grid(Vec3::new(-1.6, -1.6, 0.0), Vec3::new(3.2, 0.0, 0.0), Vec3::new(0.0, 3.2, 0.0), 24, 1, |p| {
                clamp01([0.5 + 0.25 * (1.5 * p.x).sin(), 0.45 + 0.25 * (1.3 * p.y).cos(), 0.35])
            });
            b.finish(Vec3::new(0.0, 0.0, 0.3), 3.2, 20f64.to_radians())
        }
        SynthKind::TwoSpheres => {
            b.sphere(Vec3::new(-0.6, 0.0, 0.0), 0.45, 3, 0, |d| clamp01([0.8, 0.3 + 0.2 * d.z, 0.25 + 0.1 * d.x]));
            b.sphere(Vec3::new(0.6, 0.0, 0.0), 0.45, 3, 1, |d| clamp01([0.2 + 0.1 * d.y, 0.35, 0.8 + 0.15 * d.z]));
            b.finish(Vec3::zeros(), 2.6, -60f64.to_radians())
        }
        SynthKind::TexturedCube => {
            let n = 16;
            let sides: [(Vec3, Vec3, Vec3, [f64; 3]); 6] = [
                (Vec3::new(-0.5, -0.5, -0.5), Vec3::y(), Vec3::x(), [0.8, 0.3, 0.3]),
                (Vec3::new(-0.5, -0.5, 0.5), Vec3::x(), Vec3::y(), [0.3, 0.8, 0.3]),
                (Vec3::new(-0.5, -0.5, -0.5), Vec3::x(), Vec3::z(), [0.3, 0.3, 0.8]),
                (Vec3::new(-0.5, 0.5, -0.5), Vec3::z(), Vec3::x(), [0.8, 0.8, 0.3]),
                (Vec3::new(-0.5, -0.5, -0.5), Vec3::z(), Vec3::y(), [0.8, 0.3, 0.8]),
                (Vec3::new(0.5, -0.5, -0.5), Vec3::y(), Vec3::z(), [0.3, 0.8, 0.8]),
            ];
            for (o, u, v, base) in sides {
                b.grid(o, u, v, n, 0, move |p| {
                    let s = 0.8 + 0.2 * (9.0 * p.x).sin() * (9.0 * p.y).sin() * (9.0 * p.z).cos();
                    clamp01(base.map(|c| c * s))
                });
            }
            b.finish(Vec3::zeros(), 2.6, -60f64.to_radians())
        }
    }
}

/// Cameras on a sphere around the scene: `train` views on a Fibonacci
/// spiral, then `train / 5` test views on an offset spiral, all jittered by `seed`.
pub fn cameras(gt: &GroundTruth, opts: &SynthOptions) -> Result<Vec<(CameraModel, Split)>> {
    if opts.views == 0 {
        return Err(Error::InvalidInput("at least one view is required".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let n_test = opts.views / 5;
    let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
    let lo = gt.min_elevation.sin();
    let hi = 70f64.to_radians().sin();
    let f = 0.5 * opts.width as f64 / 30f64.to_radians().tan();
    let mut out = Vec::new();
    for (count, split, offset) in [(opts.views, Split::Train, 0.0), (n_test, Split::Test, 0.5)] {
        for i in 0..count {
            let s = (i as f64 + 0.5 + offset * 0.5) / count as f64;
            let z = lo + (hi - lo) * s;
            let az = golden * i as f64 + offset * 1.7 + rng.random_range(-0.05..0.05);
            let r = (1.0 - z * z).sqrt();
            let dir = Vec3::new(r * az.cos(), r * az.sin(), z);
            let eye = gt.look_at + dir * gt.camera_radius * (1.0 + rng.random_range(-0.05..0.05));
            let up = if dir.z.abs() > 0.99 { Vec3::x() } else { Vec3::z() };
            let cam = CameraModel::look_at(eye, gt.look_at, up, f, f, opts.width, opts.height, 0.05)?;
            out.push((cam, split));
        }
    }
    Ok(out)
}

/// Area-weighted surface samples with their sRGB colors.
pub fn sample_points(gt: &GroundTruth, count: usize, seed: u64) -> (Vec<Vec3>, Vec<[u8; 3]>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let vs = &gt.scene.vertices;
    let faces = &gt.scene.topology.faces;
    let mut cdf = Vec::with_capacity(faces.len());
    let mut acc = 0.0;
    for f in faces {
        let p = f.map(|i| vs.positions[i as usize]);
        acc += (p[1] - p[0]).cross(&(p[2] - p[0])).norm();
        cdf.push(acc);
    }
    let mut pos = Vec::with_capacity(count);
    let mut col = Vec::with_capacity(count);
    for _ in 0..count {
        let x = rng.random::<f64>() * acc;
        let fi = cdf.partition_point(|&c| c < x).min(faces.len() - 1);
        let (mut a, mut b): (f64, f64) = (rng.random(), rng.random());
        if a + b > 1.0 {
            a = 1.0 - a;
            b = 1.0 - b;
        }
        let w = [1.0 - a - b, a, b];
        let f = faces[fi];
        let mut p = Vec3::zeros();
        let mut c = [0.0; 3];
        for k in 0..3 {
            let i = f[k] as usize;
            p += vs.positions[i] * w[k];
            let dc = dc_color(&vs.sh[i]);
            for ch in 0..3 {
                c[ch] += dc[ch] * w[k];
            }
        }
        pos.push(p);
        col.push(c.map(|v| to_u8(linear_to_srgb(v))));
    }
    (pos, col)
}

/// Writes images, depth maps, masks, the SfM point cloud, the ground-truth
/// mesh and `scene.json` into `dir`. Identical options give identical files.
pub fn generate(opts: &SynthOptions, dir: &Path) -> Result<SceneManifest> {
    if opts.width == 0 || opts.height == 0 || opts.supersample == 0 {
        return Err(Error::InvalidInput("image size and supersampling must be positive".into()));
    }
    if opts.points < 4 {
        return Err(Error::InvalidInput("at least 4 SfM points are required".into()));
    }
    let gt = ground_truth(opts.kind);
    let cams = cameras(&gt, opts)?;
    for sub in ["images", "depth", "masks"] {
        fs::create_dir_all(dir.join(sub)).map_err(|e| Error::io(dir.join(sub), e))?;
    }
    let settings = RenderSettings::default().with_supersample(opts.supersample);
    let mut views = Vec::with_capacity(cams.len());
    for (i, (cam, split)) in cams.iter().enumerate() {
        let name = format!("{}_{i:03}", if *split == Split::Train { "train" } else { "test" });
        let out = render(&gt.scene, cam, 1.0, &settings)?;
        let image = Image::new(cam.width, cam.height, out.color.clone())?;
        let mut entry = ViewEntry::from_camera(&name, format!("images/{name}.png"), cam, *split);
        save_png_srgb(&dir.join(&entry.image), &image)?;
        let depth: Vec<f64> = out.depth.iter().zip(&out.alpha).map(|(&d, &a)| if a > 0.5 { d } else { 0.0 }).collect();
        let dp = format!("depth/{name}.png");
        save_depth_png(&dir.join(&dp), cam.width, cam.height, &depth, DEPTH_SCALE)?;
        let mask: Vec<bool> = out.primary_face.iter().map(|f| f.is_some_and(|f| gt.face_object[f as usize] == 0)).collect();
        let mp = format!("masks/{name}.png");
        save_mask(&dir.join(&mp), cam.width, cam.height, &mask)?;
        entry.depth = Some(dp.into());
        entry.mask = Some(mp.into());
        views.push(entry);
    }
    let (pos, col) = sample_points(&gt, opts.points, opts.seed);
    write_ply(&dir.join("points.ply"), &pos, &col, &[])?;
    export_mesh(&gt.scene, &dir.join("gt_mesh.ply"), MeshFormat::Ply)?;
    let objects: String = gt.face_object.iter().map(|o| format!("{o}\n")).collect();
    fs::write(dir.join("gt_face_objects.txt"), objects).map_err(|e| Error::io(dir.join("gt_face_objects.txt"), e))?;
    let manifest = SceneManifest { version: MANIFEST_VERSION, sfm_points: "points.ply".into(), depth_scale: DEPTH_SCALE, views };
    save_manifest(&dir.join("scene.json"), &manifest)?;
    Ok(manifest)
}
