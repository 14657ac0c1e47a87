use rayon::prelude::*;

use super::{PreparedView, RenderOutput, RenderSettings};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Vec2, Vec3};
use crate::scene::{reparam_opacity_grad, Scene, SceneGradients};
use crate::sh;

/// Upstream gradients at the output resolution.
///
/// `depth` and `normal` are taken with respect to the raw accumulations
/// (`RenderOutput::depth_accum` / `normal_accum`). Missing buffers count as zero.
#[derive(Clone, Debug, Default)]
pub struct PixelGrads {
    pub color: Vec<[f64; 3]>,
    pub alpha: Option<Vec<f64>>,
    pub depth: Option<Vec<f64>>,
    pub normal: Option<Vec<Vec3>>,
}

impl PixelGrads {
    pub fn from_color(color: Vec<[f64; 3]>) -> Self {
        PixelGrads { color, ..Default::default() }
    }

    fn check(&self, n: usize) -> Result<()> {
        let check = |len: usize| if len == n { Ok(()) } else { Err(Error::shape(n, len)) };
        check(self.color.len())?;
        if let Some(a) = &self.alpha {
            check(a.len())?;
        }
        if let Some(d) = &self.depth {
            check(d.len())?;
        }
        if let Some(v) = &self.normal {
            check(v.len())?;
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Default)]
struct FaceGrad {
    screen: [Vec2; 3],
    depth: [f64; 3],
    color: [[f64; 3]; 3],
    normal: Vec3,
    opacity: f64,
}

impl FaceGrad {
    fn add(&mut self, o: &FaceGrad) {
        for k in 0..3 {
            self.screen[k] += o.screen[k];
            self.depth[k] += o.depth[k];
            for c in 0..3 {
                self.color[k][c] += o.color[k][c];
            }
        }
        self.normal += o.normal;
        self.opacity += o.opacity;
    }
}

struct Fragment {
    local: usize,
    alpha: f64,
    t: f64,
    value: f64,
    g: f64,
    bary: [f64; 3],
}

/// Back-propagates pixel gradients to vertex positions, SH coefficients and
/// opacity logits. `output` must come from [`super::render`] with the same
/// inputs and contribution recording enabled.
pub fn render_backward(
    scene: &Scene,
    camera: &CameraModel,
    o_t: f64,
    settings: &RenderSettings,
    output: &RenderOutput,
    grads: &PixelGrads,
) -> Result<SceneGradients> {
    let log = output.contributions.as_ref().ok_or(Error::MissingContributionLog)?;
    grads.check(output.pixel_count())?;
    let view = PreparedView::new(scene, camera, o_t, settings)?;
    if log.width != view.width || log.height != view.height {
        return Err(Error::shape(
            format!("{}x{}", view.width, view.height),
            format!("{}x{}", log.width, log.height),
        ));
    }

    let tile_grads: Vec<Vec<FaceGrad>> = (0..view.tiles.len())
        .into_par_iter()
        .map(|t| backward_tile(&view, t, log, grads, output.width, settings))
        .collect();

    let mut face_grads = vec![FaceGrad::default(); view.faces.len()];
    for (t, tg) in tile_grads.iter().enumerate() {
        for (local, &rank) in view.tiles[t].iter().enumerate() {
            face_grads[rank as usize].add(&tg[local]);
        }
    }

    Ok(accumulate_vertices(scene, &view, o_t, &face_grads))
}

fn backward_tile(
    view: &PreparedView,
    tile: usize,
    log: &super::ContributionLog,
    grads: &PixelGrads,
    out_width: u32,
    settings: &RenderSettings,
) -> Vec<FaceGrad> {
    let list = &view.tiles[tile];
    let mut acc = vec![FaceGrad::default(); list.len()];
    if list.is_empty() {
        return acc;
    }
    let (x0, y0, x1, y1) = view.tile_rect(tile);
    let s = settings.supersample;
    let inv = 1.0 / (s * s) as f64;
    let bg = settings.background;
    let mut frags: Vec<Fragment> = Vec::new();
    for y in y0..y1 {
        for x in x0..x1 {
            let entries = log.pixel(x, y);
            if entries.is_empty() {
                continue;
            }
            let o = ((y / s) * out_width + x / s) as usize;
            let gc = grads.color[o].map(|v| v * inv);
            let ga = grads.alpha.as_ref().map_or(0.0, |a| a[o] * inv);
            let gd = grads.depth.as_ref().map_or(0.0, |d| d[o] * inv);
            let gn = grads.normal.as_ref().map_or(Vec3::zeros(), |n| n[o] * inv);
            if gc == [0.0; 3] && ga == 0.0 && gd == 0.0 && gn == Vec3::zeros() {
                continue;
            }
            let p = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);

            frags.clear();
            for e in entries {
                let rank = view.rank_of[e.face as usize];
                let local = list.binary_search(&rank).expect("logged face is binned in its tile");
                let face = &view.faces[rank as usize];
                let (bary, color, depth) = view.fragment(face, &p);
                let g = gc[0] * color[0]
                    + gc[1] * color[1]
                    + gc[2] * color[2]
                    + ga
                    + gd * depth
                    + gn.dot(&face.normal);
                frags.push(Fragment {
                    local,
                    alpha: e.opacity * e.window,
                    t: e.transmittance,
                    value: e.window,
                    g,
                    bary,
                });
            }

            // Reverse scan: R_n is the gradient of everything behind fragment n-1.
            let mut r = gc[0] * bg[0] + gc[1] * bg[1] + gc[2] * bg[2];
            for f in frags.iter().rev() {
                let face = &view.faces[list[f.local] as usize];
                let d_alpha = f.t * (f.g - r);
                r = f.alpha * f.g + (1.0 - f.alpha) * r;
                let w = f.t * f.alpha;
                let fg = &mut acc[f.local];

                fg.opacity += d_alpha * f.value;
                let d_window = d_alpha * face.opacity;
                if d_window != 0.0 {
                    let sample = face.tri.window_sample(&p, view.sigma);
                    face.tri.window_vertex_grad(&p, view.sigma, &sample, d_window, &mut fg.screen);
                }

                let dc = gc.map(|v| v * w);
                let dz = gd * w;
                fg.normal += gn * w;
                let mut d_bary = [0.0; 3];
                for k in 0..3 {
                    let vc = &view.colors[face.verts[k] as usize];
                    d_bary[k] = vc[0] * dc[0] + vc[1] * dc[1] + vc[2] * dc[2] + face.tri.depths[k] * dz;
                    fg.depth[k] += f.bary[k] * dz;
                    for c in 0..3 {
                        fg.color[k][c] += f.bary[k] * dc[c];
                    }
                }
                face.tri.barycentric_vertex_grad(&p, &f.bary, &d_bary, &mut fg.screen);
            }
        }
    }
    acc
}

fn accumulate_vertices(
    scene: &Scene,
    view: &PreparedView,
    o_t: f64,
    face_grads: &[FaceGrad],
) -> SceneGradients {
    let n = scene.num_vertices();
    let vs = &scene.vertices;
    let cam = &view.camera;
    let mut d_cam = vec![Vec3::zeros(); n];
    let mut d_color = vec![[0.0f64; 3]; n];
    let mut out = SceneGradients::zeros(n);

    for (face, g) in view.faces.iter().zip(face_grads) {
        let v = face.verts.map(|i| i as usize);
        for k in 0..3 {
            let pc = view.cam_pos[v[k]];
            let iz = 1.0 / pc.z;
            let gs = g.screen[k];
            let gx = gs.x * cam.fx * iz;
            let gy = gs.y * cam.fy * iz;
            d_cam[v[k]] += Vec3::new(gx, gy, -(gx * pc.x + gy * pc.y) * iz + g.depth[k]);
            for c in 0..3 {
                d_color[v[k]][c] += g.color[k][c];
            }
        }
        if g.normal != Vec3::zeros() && face.flip != 0.0 {
            let len = face.raw_normal.norm();
            let nh = face.raw_normal / len;
            let gn = g.normal * face.flip;
            let d_raw = (gn - nh * nh.dot(&gn)) / len;
            let p0 = view.cam_pos[v[0]];
            let a = view.cam_pos[v[1]] - p0;
            let b = view.cam_pos[v[2]] - p0;
            let da = b.cross(&d_raw);
            let db = d_raw.cross(&a);
            d_cam[v[1]] += da;
            d_cam[v[2]] += db;
            d_cam[v[0]] -= da + db;
        }
        if g.opacity != 0.0 {
            let a = face.argmin as usize;
            out.d_opacity_logits[a] += g.opacity * reparam_opacity_grad(vs.opacity_logits[a], o_t);
        }
    }

    let rt = cam.rotation.transpose();
    let center = cam.center();
    for i in 0..n {
        let mut dp = rt * d_cam[i];
        let dc = d_color[i];
        if dc != [0.0; 3] {
            let d = vs.positions[i] - center;
            let dist = d.norm();
            if dist > 0.0 {
                let dir = d / dist;
                let b = sh::basis(&dir);
                let raw = sh::raw_color(&vs.sh[i], &b);
                let mut d_raw = [0.0; 3];
                for c in 0..3 {
                    if raw[c] + 0.5 > 0.0 {
                        d_raw[c] = dc[c];
                    }
                }
                let bg = sh::basis_gradient(&dir);
                let mut d_dir = Vec3::zeros();
                for c in 0..3 {
                    if d_raw[c] == 0.0 {
                        continue;
                    }
                    for k in 0..sh::SH_BASIS {
                        out.d_sh[i][c * sh::SH_BASIS + k] += d_raw[c] * b[k];
                        d_dir += bg[k] * (d_raw[c] * vs.sh[i][c * sh::SH_BASIS + k]);
                    }
                }
                dp += (d_dir - dir * dir.dot(&d_dir)) / dist;
            }
        }
        out.d_positions[i] = dp;
    }
    out
}
