//! Differentiable, tile-based triangle rasterizer.
//!
//! Faces are sorted globally by view depth, binned into square tiles and
//! composited front to back per pixel:
//!
//! ```text
//! C(p) = Σ_n c_n α_n T_n + T_final · background,   α_n = o_n · I_n(p),
//! T_{n+1} = T_n (1 - α_n)
//! ```
//!
//! Rendering happens at `supersample`× the camera resolution and is box-filtered
//! down. Alpha, depth and normal are accumulated with the same weights; `depth`
//! and `normal` in [`RenderOutput`] are those accumulations divided by alpha.
//!
//! Work is split by tile and every reduction runs in a fixed order, so renders
//! and gradients are bit-identical across runs and thread counts.

mod backward;

pub use backward::{render_backward, PixelGrads};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, ScreenTriangle, Vec2, Vec3};
use crate::scene::{triangle_opacity_argmin, vertex_color, Scene};

/// Compositing stops once transmittance falls below this value.
pub const TRANSMITTANCE_EPS: f64 = 1e-4;

pub const DEFAULT_TILE_SIZE: u32 = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SortMode {
    /// View depth of the face centroid; ties broken by face index.
    #[default]
    CentroidDepth,
    /// Smallest vertex depth; ties broken by face index.
    NearestVertex,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderSettings {
    pub supersample: u32,
    pub background: [f64; 3],
    pub sort: SortMode,
    /// Overrides the camera's near plane when set.
    pub near: Option<f64>,
    /// Keep the per-pixel contribution lists (needed by the backward pass).
    pub record_contributions: bool,
    pub tile_size: u32,
}

impl Default for RenderSettings {
    fn default() -> Self {
        RenderSettings {
            supersample: 1,
            background: [0.0; 3],
            sort: SortMode::CentroidDepth,
            near: None,
            record_contributions: false,
            tile_size: DEFAULT_TILE_SIZE,
        }
    }
}

impl RenderSettings {
    pub fn with_supersample(mut self, s: u32) -> Self {
        self.supersample = s;
        self
    }

    pub fn recording(mut self) -> Self {
        self.record_contributions = true;
        self
    }
}

/// One fragment that contributed to a pixel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Contribution {
    pub face: u32,
    pub window: f64,
    pub opacity: f64,
    /// Transmittance in front of this fragment.
    pub transmittance: f64,
}

impl Contribution {
    #[inline]
    pub fn weight(&self) -> f64 {
        self.transmittance * self.opacity * self.window
    }
}

/// Per-pixel front-to-back contribution lists at the supersampled resolution.
#[derive(Clone, Debug, Default)]
pub struct ContributionLog {
    pub width: u32,
    pub height: u32,
    ranges: Vec<(u32, u32)>,
    entries: Vec<Contribution>,
}

impl ContributionLog {
    pub fn pixel(&self, x: u32, y: u32) -> &[Contribution] {
        let (start, len) = self.ranges[(y * self.width + x) as usize];
        &self.entries[start as usize..(start + len) as usize]
    }

    pub fn pixels(&self) -> impl Iterator<Item = &[Contribution]> + '_ {
        self.ranges.iter().map(move |&(s, l)| &self.entries[s as usize..(s + l) as usize])
    }

    pub fn total_fragments(&self) -> usize {
        self.entries.len()
    }
}

#[derive(Clone, Debug)]
pub struct RenderOutput {
    pub width: u32,
    pub height: u32,
    pub supersample: u32,
    pub color: Vec<[f64; 3]>,
    pub alpha: Vec<f64>,
    /// Blend-weighted depth divided by alpha (0 where alpha is 0).
    pub depth: Vec<f64>,
    /// Blend-weighted camera-frame normal divided by alpha.
    pub normal: Vec<Vec3>,
    /// Raw `Σ w_n z_n`.
    pub depth_accum: Vec<f64>,
    /// Raw `Σ w_n n_n`.
    pub normal_accum: Vec<Vec3>,
    /// Front-most contributing face (majority vote over subpixels).
    pub primary_face: Vec<Option<u32>>,
    /// Largest blending weight `T·o·I` each face reached in this view.
    pub max_weight: Vec<f64>,
    pub contributions: Option<ContributionLog>,
}

impl RenderOutput {
    pub fn pixel_count(&self) -> usize {
        (self.width * self.height) as usize
    }
}

pub(crate) struct PreparedFace {
    pub index: u32,
    pub verts: [u32; 3],
    pub tri: ScreenTriangle,
    pub opacity: f64,
    pub argmin: u32,
    /// Camera-facing unit normal in the camera frame.
    pub normal: Vec3,
    /// Unnormalised winding normal and its facing sign, for the backward pass.
    pub raw_normal: Vec3,
    pub flip: f64,
    pub bbox: [u32; 4],
}

/// Per-view data shared by the forward and backward passes.
pub(crate) struct PreparedView {
    pub camera: CameraModel,
    pub width: u32,
    pub height: u32,
    pub sigma: f64,
    pub tile_size: u32,
    pub tiles_x: u32,
    pub cam_pos: Vec<Vec3>,
    pub colors: Vec<[f64; 3]>,
    /// Faces in compositing order.
    pub faces: Vec<PreparedFace>,
    /// Per tile, ascending positions into `faces`.
    pub tiles: Vec<Vec<u32>>,
    /// Face index to position in `faces` (`u32::MAX` if culled).
    pub rank_of: Vec<u32>,
}

impl PreparedView {
    pub(crate) fn new(
        scene: &Scene,
        camera: &CameraModel,
        o_t: f64,
        settings: &RenderSettings,
    ) -> Result<Self> {
        camera.validate()?;
        if settings.supersample == 0 {
            return Err(Error::InvalidInput("supersample factor must be at least 1".into()));
        }
        if settings.tile_size == 0 {
            return Err(Error::InvalidInput("tile size must be positive".into()));
        }
        let mut cam = camera.scaled(settings.supersample);
        if let Some(near) = settings.near {
            cam.near = near;
        }
        let width = cam.width;
        let height = cam.height;
        let center = cam.center();
        let vs = &scene.vertices;

        let cam_pos: Vec<Vec3> = vs.positions.par_iter().map(|p| cam.to_camera(p)).collect();
        let colors: Vec<[f64; 3]> = (0..vs.len())
            .into_par_iter()
            .map(|i| vertex_color(vs, i, &center))
            .collect();

        let near = cam.near;
        let sigma = scene.topology.shared_sigma;
        let faces: Vec<(f64, PreparedFace)> = scene
            .topology
            .faces
            .par_iter()
            .enumerate()
            .filter_map(|(fi, f)| {
                let pc = f.map(|i| cam_pos[i as usize]);
                if pc.iter().any(|p| !(p.z >= near)) {
                    return None;
                }
                let screen = pc.map(|p| cam.project_camera_point(&p));
                let bbox = pixel_bbox(&screen, width, height)?;
                let tri = ScreenTriangle::new(screen, [pc[0].z, pc[1].z, pc[2].z]).ok()?;
                let (opacity, argmin) = triangle_opacity_argmin(vs, f, o_t);
                let raw_normal = (pc[1] - pc[0]).cross(&(pc[2] - pc[0]));
                let len = raw_normal.norm();
                let centroid = (pc[0] + pc[1] + pc[2]) / 3.0;
                let (normal, flip) = if len > 0.0 {
                    let n = raw_normal / len;
                    if n.dot(&centroid) > 0.0 {
                        (-n, -1.0)
                    } else {
                        (n, 1.0)
                    }
                } else {
                    (Vec3::zeros(), 0.0)
                };
                let key = match settings.sort {
                    SortMode::CentroidDepth => (pc[0].z + pc[1].z + pc[2].z) / 3.0,
                    SortMode::NearestVertex => pc[0].z.min(pc[1].z).min(pc[2].z),
                };
                Some((
                    key,
                    PreparedFace {
                        index: fi as u32,
                        verts: *f,
                        tri,
                        opacity,
                        argmin,
                        normal,
                        raw_normal,
                        flip,
                        bbox,
                    },
                ))
            })
            .collect();
        let mut order: Vec<(f64, u32, u32)> =
            faces.iter().enumerate().map(|(i, (key, f))| (*key, f.index, i as u32)).collect();
        order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut slots: Vec<Option<PreparedFace>> = faces.into_iter().map(|(_, f)| Some(f)).collect();
        let faces: Vec<PreparedFace> = order.iter().map(|o| slots[o.2 as usize].take().expect("each face placed once")).collect();

        let ts = settings.tile_size;
        let tiles_x = width.div_ceil(ts);
        let tiles_y = height.div_ceil(ts);
        let mut tiles = vec![Vec::new(); (tiles_x * tiles_y) as usize];
        let mut rank_of = vec![u32::MAX; scene.num_faces()];
        for (rank, f) in faces.iter().enumerate() {
            rank_of[f.index as usize] = rank as u32;
            let [x0, y0, x1, y1] = f.bbox;
            for ty in y0 / ts..=y1 / ts {
                for tx in x0 / ts..=x1 / ts {
                    tiles[(ty * tiles_x + tx) as usize].push(rank as u32);
                }
            }
        }

        Ok(PreparedView {
            camera: cam,
            width,
            height,
            sigma,
            tile_size: ts,
            tiles_x,
            cam_pos,
            colors,
            faces,
            tiles,
            rank_of,
        })
    }

    pub(crate) fn tile_rect(&self, tile: usize) -> (u32, u32, u32, u32) {
        let tx = tile as u32 % self.tiles_x;
        let ty = tile as u32 / self.tiles_x;
        let x0 = tx * self.tile_size;
        let y0 = ty * self.tile_size;
        (x0, y0, (x0 + self.tile_size).min(self.width), (y0 + self.tile_size).min(self.height))
    }

    /// Per-fragment quantities used by both passes.
    #[inline]
    pub(crate) fn fragment(&self, face: &PreparedFace, p: &Vec2) -> ([f64; 3], [f64; 3], f64) {
        let bary = face.tri.barycentric(p);
        let mut color = [0.0; 3];
        for k in 0..3 {
            let c = &self.colors[face.verts[k] as usize];
            for ch in 0..3 {
                color[ch] += bary[k] * c[ch];
            }
        }
        let depth = face.tri.interpolate_depth(&bary);
        (bary, color, depth)
    }
}

/// Inclusive range of pixels whose centers may fall inside the triangle.
fn pixel_bbox(v: &[Vec2; 3], width: u32, height: u32) -> Option<[u32; 4]> {
    let min_x = v[0].x.min(v[1].x).min(v[2].x);
    let max_x = v[0].x.max(v[1].x).max(v[2].x);
    let min_y = v[0].y.min(v[1].y).min(v[2].y);
    let max_y = v[0].y.max(v[1].y).max(v[2].y);
    let x0 = (min_x - 0.5).ceil().max(0.0);
    let y0 = (min_y - 0.5).ceil().max(0.0);
    let x1 = (max_x - 0.5).floor().min(width as f64 - 1.0);
    let y1 = (max_y - 0.5).floor().min(height as f64 - 1.0);
    if !(x0 <= x1 && y0 <= y1) {
        return None;
    }
    Some([x0 as u32, y0 as u32, x1 as u32, y1 as u32])
}

/// Front-to-back alpha compositing state for one pixel.
#[derive(Clone, Copy, Debug)]
pub struct Compositor {
    pub transmittance: f64,
}

impl Default for Compositor {
    fn default() -> Self {
        Compositor { transmittance: 1.0 }
    }
}

impl Compositor {
    /// Adds a layer and returns its blending weight `T·α`.
    #[inline]
    pub fn add(&mut self, alpha: f64) -> f64 {
        let w = self.transmittance * alpha;
        self.transmittance *= 1.0 - alpha;
        w
    }

    #[inline]
    pub fn saturated(&self) -> bool {
        self.transmittance < TRANSMITTANCE_EPS
    }
}

struct TileForward {
    color: Vec<[f64; 3]>,
    alpha: Vec<f64>,
    depth: Vec<f64>,
    normal: Vec<Vec3>,
    primary: Vec<Option<u32>>,
    counts: Vec<u32>,
    entries: Vec<Contribution>,
    max_weight: Vec<f64>,
}

fn render_tile(view: &PreparedView, tile: usize, background: &[f64; 3], record: bool) -> TileForward {
    let (x0, y0, x1, y1) = view.tile_rect(tile);
    let n = ((x1 - x0) * (y1 - y0)) as usize;
    let list = &view.tiles[tile];
    let mut out = TileForward {
        color: Vec::with_capacity(n),
        alpha: Vec::with_capacity(n),
        depth: Vec::with_capacity(n),
        normal: Vec::with_capacity(n),
        primary: Vec::with_capacity(n),
        counts: Vec::with_capacity(if record { n } else { 0 }),
        entries: Vec::new(),
        max_weight: vec![0.0; list.len()],
    };
    let mut row: Vec<u32> = Vec::with_capacity(list.len());
    for y in y0..y1 {
        row.clear();
        row.extend((0..list.len() as u32).filter(|&l| {
            let b = &view.faces[list[l as usize] as usize].bbox;
            b[1] <= y && y <= b[3]
        }));
        for x in x0..x1 {
            let p = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
            let mut comp = Compositor::default();
            let mut color = [0.0; 3];
            let mut depth = 0.0;
            let mut normal = Vec3::zeros();
            let mut primary = None;
            let mut count = 0u32;
            for &l in &row {
                let local = l as usize;
                let face = &view.faces[list[local] as usize];
                if x < face.bbox[0] || x > face.bbox[2] {
                    continue;
                }
                let window = face.tri.window(&p, view.sigma);
                if window <= 0.0 {
                    continue;
                }
                let alpha = face.opacity * window;
                let (_, c, z) = view.fragment(face, &p);
                let t_before = comp.transmittance;
                let w = comp.add(alpha);
                for ch in 0..3 {
                    color[ch] += w * c[ch];
                }
                depth += w * z;
                normal += face.normal * w;
                if primary.is_none() {
                    primary = Some(face.index);
                }
                if w > out.max_weight[local] {
                    out.max_weight[local] = w;
                }
                if record {
                    out.entries.push(Contribution {
                        face: face.index,
                        window,
                        opacity: face.opacity,
                        transmittance: t_before,
                    });
                    count += 1;
                }
                if comp.saturated() {
                    break;
                }
            }
            let t = comp.transmittance;
            for ch in 0..3 {
                color[ch] += t * background[ch];
            }
            out.color.push(color);
            out.alpha.push(1.0 - t);
            out.depth.push(depth);
            out.normal.push(normal);
            out.primary.push(primary);
            if record {
                out.counts.push(count);
            }
        }
    }
    out
}

/// Renders the scene from `camera` with the opacity floor `o_t`.
pub fn render(
    scene: &Scene,
    camera: &CameraModel,
    o_t: f64,
    settings: &RenderSettings,
) -> Result<RenderOutput> {
    let view = PreparedView::new(scene, camera, o_t, settings)?;
    let record = settings.record_contributions;
    let tiles: Vec<TileForward> = (0..view.tiles.len())
        .into_par_iter()
        .map(|t| render_tile(&view, t, &settings.background, record))
        .collect();

    let (w, h) = (view.width as usize, view.height as usize);
    let mut color = vec![[0.0; 3]; w * h];
    let mut alpha = vec![0.0; w * h];
    let mut depth = vec![0.0; w * h];
    let mut normal = vec![Vec3::zeros(); w * h];
    let mut primary = vec![None; w * h];
    let mut max_weight = vec![0.0; scene.num_faces()];
    let mut log = record.then(|| ContributionLog {
        width: view.width,
        height: view.height,
        ranges: vec![(0, 0); w * h],
        entries: Vec::with_capacity(tiles.iter().map(|t| t.entries.len()).sum()),
    });
    for (ti, tile) in tiles.into_iter().enumerate() {
        let (x0, y0, x1, y1) = view.tile_rect(ti);
        let mut k = 0;
        let base = log.as_ref().map_or(0, |l| l.entries.len() as u32);
        let mut offset = base;
        for y in y0..y1 {
            for x in x0..x1 {
                let idx = y as usize * w + x as usize;
                color[idx] = tile.color[k];
                alpha[idx] = tile.alpha[k];
                depth[idx] = tile.depth[k];
                normal[idx] = tile.normal[k];
                primary[idx] = tile.primary[k];
                if let Some(log) = log.as_mut() {
                    let c = tile.counts[k];
                    log.ranges[idx] = (offset, c);
                    offset += c;
                }
                k += 1;
            }
        }
        if let Some(log) = log.as_mut() {
            log.entries.extend_from_slice(&tile.entries);
        }
        for (local, &rank) in view.tiles[ti].iter().enumerate() {
            let fi = view.faces[rank as usize].index as usize;
            if tile.max_weight[local] > max_weight[fi] {
                max_weight[fi] = tile.max_weight[local];
            }
        }
    }

    Ok(downsample(
        camera,
        settings.supersample,
        Buffers { color, alpha, depth, normal, primary },
        max_weight,
        log,
    ))
}

struct Buffers {
    color: Vec<[f64; 3]>,
    alpha: Vec<f64>,
    depth: Vec<f64>,
    normal: Vec<Vec3>,
    primary: Vec<Option<u32>>,
}

fn downsample(
    camera: &CameraModel,
    s: u32,
    hi: Buffers,
    max_weight: Vec<f64>,
    log: Option<ContributionLog>,
) -> RenderOutput {
    let (w, h) = (camera.width as usize, camera.height as usize);
    let su = s as usize;
    let hw = w * su;
    let inv = 1.0 / (su * su) as f64;
    let mut color = vec![[0.0; 3]; w * h];
    let mut alpha = vec![0.0; w * h];
    let mut depth_accum = vec![0.0; w * h];
    let mut normal_accum = vec![Vec3::zeros(); w * h];
    let mut primary = vec![None; w * h];
    let mut votes: Vec<(u32, u32)> = Vec::with_capacity(su * su);
    for y in 0..h {
        for x in 0..w {
            let o = y * w + x;
            if su == 1 {
                color[o] = hi.color[o];
                alpha[o] = hi.alpha[o];
                depth_accum[o] = hi.depth[o];
                normal_accum[o] = hi.normal[o];
                primary[o] = hi.primary[o];
                continue;
            }
            let mut c = [0.0; 3];
            let mut a = 0.0;
            let mut d = 0.0;
            let mut nrm = Vec3::zeros();
            votes.clear();
            for sy in 0..su {
                for sx in 0..su {
                    let i = (y * su + sy) * hw + x * su + sx;
                    for ch in 0..3 {
                        c[ch] += hi.color[i][ch];
                    }
                    a += hi.alpha[i];
                    d += hi.depth[i];
                    nrm += hi.normal[i];
                    if let Some(f) = hi.primary[i] {
                        match votes.iter_mut().find(|v| v.0 == f) {
                            Some(v) => v.1 += 1,
                            None => votes.push((f, 1)),
                        }
                    }
                }
            }
            color[o] = c.map(|v| v * inv);
            alpha[o] = a * inv;
            depth_accum[o] = d * inv;
            normal_accum[o] = nrm * inv;
            primary[o] = votes
                .iter()
                .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
                .map(|v| v.0);
        }
    }
    let depth = depth_accum
        .iter()
        .zip(&alpha)
        .map(|(&d, &a)| if a > 0.0 { d / a } else { 0.0 })
        .collect();
    let normal = normal_accum
        .iter()
        .zip(&alpha)
        .map(|(n, &a)| if a > 0.0 { n / a } else { Vec3::zeros() })
        .collect();
    RenderOutput {
        width: camera.width,
        height: camera.height,
        supersample: s,
        color,
        alpha,
        depth,
        normal,
        depth_accum,
        normal_accum,
        primary_face: primary,
        max_weight,
        contributions: log,
    }
}

/// Depth and normal maps of a render, for the geometric losses.
pub fn render_depth_normal_maps(
    scene: &Scene,
    camera: &CameraModel,
    o_t: f64,
    settings: &RenderSettings,
) -> Result<(Vec<f64>, Vec<Vec3>)> {
    let out = render(scene, camera, o_t, settings)?;
    Ok((out.depth, out.normal))
}

#[cfg(test)]
mod tests;
