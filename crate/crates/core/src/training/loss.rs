//! Photometric and geometric training losses with their upstream gradients.

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Vec3};
use crate::metrics::ssim_with_grad;
use crate::raster::{PixelGrads, RenderOutput};
use crate::scene::{reparam_opacity, reparam_opacity_grad, Scene, VertexSet};

/// Weights of the image-space terms.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub ssim_lambda: f64,
    pub beta_n: f64,
    pub beta_d: f64,
}

/// Unweighted loss terms and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossTerms {
    pub l1: f64,
    pub dssim: f64,
    pub normal: f64,
    pub depth: f64,
    pub opacity: f64,
    pub vertex_depth: f64,
    pub total: f64,
}

/// Alpha below which a pixel does not count as surface for the geometric terms.
pub const SURFACE_ALPHA: f64 = 0.5;

/// Photometric term `(1 - λ)·L1 + λ·(1 - SSIM)/2`, normal consistency and
/// external-depth alignment. `depth_gt` holds view-space depth, 0 marking
/// missing values. Gradients are with respect to the render's color, alpha
/// and raw depth/normal accumulations.
pub fn compute_loss(
    out: &RenderOutput,
    gt: &[[f64; 3]],
    depth_gt: Option<&[f64]>,
    camera: &CameraModel,
    w: &LossWeights,
) -> Result<(LossTerms, PixelGrads)> {
    let n = out.pixel_count();
    if gt.len() != n {
        return Err(Error::shape(n, gt.len()));
    }
    if w.beta_d > 0.0 && depth_gt.is_none() {
        return Err(Error::MissingAux("depth"));
    }
    let mut terms = LossTerms::default();
    let (ssim, mut color) = ssim_with_grad(&out.color, gt, out.width, out.height)?;
    terms.dssim = (1.0 - ssim) / 2.0;
    let lam = w.ssim_lambda;
    let k1 = (1.0 - lam) / (3 * n.max(1)) as f64;
    let mut l1 = 0.0;
    for (i, g) in color.iter_mut().enumerate() {
        for c in 0..3 {
            let d = out.color[i][c] - gt[i][c];
            l1 += d.abs();
            g[c] = -lam / 2.0 * g[c] + k1 * sign(d);
        }
    }
    terms.l1 = l1 / (3 * n.max(1)) as f64;
    terms.total = (1.0 - lam) * terms.l1 + lam * terms.dssim;

    let mut grads = PixelGrads::from_color(color);
    if w.beta_n > 0.0 {
        let (v, ga, gn) = normal_consistency(out, camera);
        terms.normal = v;
        terms.total += w.beta_n * v;
        grads.alpha = Some(ga.iter().map(|g| g * w.beta_n).collect());
        grads.normal = Some(gn.iter().map(|g| g * w.beta_n).collect());
    }
    if let (Some(d), true) = (depth_gt, w.beta_d > 0.0) {
        if d.len() != n {
            return Err(Error::shape(n, d.len()));
        }
        let (v, ga, gd) = inverse_depth_loss(out, d);
        terms.depth = v;
        terms.total += w.beta_d * v;
        let alpha = grads.alpha.get_or_insert_with(|| vec![0.0; n]);
        for (a, g) in alpha.iter_mut().zip(&ga) {
            *a += w.beta_d * g;
        }
        grads.depth = Some(gd.iter().map(|g| g * w.beta_d).collect());
    }
    Ok((terms, grads))
}

#[inline]
fn sign(d: f64) -> f64 {
    if d > 0.0 {
        1.0
    } else if d < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Camera-space point seen at pixel `(x, y)` at view depth `z`.
fn backproject(cam: &CameraModel, x: usize, y: usize, z: f64) -> Vec3 {
    Vec3::new((x as f64 + 0.5 - cam.cx) / cam.fx * z, (y as f64 + 0.5 - cam.cy) / cam.fy * z, z)
}

/// Camera-facing unit normals from central differences of the rendered depth,
/// `None` where the stencil leaves the surface.
pub fn normals_from_depth(out: &RenderOutput, cam: &CameraModel) -> Vec<Option<Vec3>> {
    let (w, h) = (out.width as usize, out.height as usize);
    let mut res = vec![None; w * h];
    if w < 3 || h < 3 {
        return res;
    }
    let ok = |i: usize| out.alpha[i] > SURFACE_ALPHA && out.depth[i] > 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let i = y * w + x;
            let st = [i - 1, i + 1, i - w, i + w];
            if !ok(i) || !st.iter().all(|&j| ok(j)) {
                continue;
            }
            let p = |xx: usize, yy: usize| backproject(cam, xx, yy, out.depth[yy * w + xx]);
            let dx = p(x + 1, y) - p(x - 1, y);
            let dy = p(x, y + 1) - p(x, y - 1);
            if let Some(n) = dx.cross(&dy).try_normalize(1e-300) {
                let c = p(x, y);
                res[i] = Some(if n.dot(&c) > 0.0 { -n } else { n });
            }
        }
    }
    res
}

/// Mean over pixels of `α - N_acc · n_depth`, i.e. the alpha-weighted
/// `1 - cos` between rendered normals and normals of the rendered depth
/// (held constant). Returns the value and gradients for alpha and `normal_accum`.
pub fn normal_consistency(out: &RenderOutput, cam: &CameraModel) -> (f64, Vec<f64>, Vec<Vec3>) {
    let n = out.pixel_count();
    let inv = 1.0 / n.max(1) as f64;
    let targets = normals_from_depth(out, cam);
    let mut ga = vec![0.0; n];
    let mut gn = vec![Vec3::zeros(); n];
    let mut total = 0.0;
    for (i, t) in targets.iter().enumerate() {
        if let Some(t) = t {
            total += out.alpha[i] - out.normal_accum[i].dot(t);
            ga[i] = inv;
            gn[i] = -t * inv;
        }
    }
    (total * inv, ga, gn)
}

/// L1 between rendered inverse depth and the scale/shift-aligned inverse of
/// `depth_gt`, over pixels that are surface in both. The alignment is a
/// least-squares fit held constant for the gradient, which is returned for
/// alpha and `depth_accum`.
pub fn inverse_depth_loss(out: &RenderOutput, depth_gt: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let n = out.pixel_count();
    let valid: Vec<usize> = (0..n)
        .filter(|&i| depth_gt[i] > 0.0 && out.alpha[i] > SURFACE_ALPHA && out.depth_accum[i] > 0.0)
        .collect();
    let mut ga = vec![0.0; n];
    let mut gd = vec![0.0; n];
    if valid.is_empty() {
        return (0.0, ga, gd);
    }
    let m = valid.len() as f64;
    let r: Vec<f64> = valid.iter().map(|&i| out.alpha[i] / out.depth_accum[i]).collect();
    let g: Vec<f64> = valid.iter().map(|&i| 1.0 / depth_gt[i]).collect();
    let gm = g.iter().sum::<f64>() / m;
    let rm = r.iter().sum::<f64>() / m;
    let var: f64 = g.iter().map(|v| (v - gm).powi(2)).sum();
    let cov: f64 = g.iter().zip(&r).map(|(a, b)| (a - gm) * (b - rm)).sum();
    let scale = if var > 1e-12 * m * gm * gm { cov / var } else { 1.0 };
    let shift = rm - scale * gm;
    let mut total = 0.0;
    for (k, &i) in valid.iter().enumerate() {
        let d = r[k] - (scale * g[k] + shift);
        total += d.abs();
        let s = sign(d) / m;
        let dacc = out.depth_accum[i];
        ga[i] = s / dacc;
        gd[i] = -s * out.alpha[i] / (dacc * dacc);
    }
    (total / m, ga, gd)
}

/// Mean reparameterized vertex opacity and its gradient with respect to the logits.
pub fn opacity_loss(vs: &VertexSet, o_t: f64) -> (f64, Vec<f64>) {
    let n = vs.len().max(1) as f64;
    let v = vs.opacity_logits.iter().map(|&l| reparam_opacity(l, o_t)).sum::<f64>() / n;
    let g = vs.opacity_logits.iter().map(|&l| reparam_opacity_grad(l, o_t) / n).collect();
    (v, g)
}

/// Mean `|z_i - z*_i|` over vertices that project inside the frame onto
/// rendered surface, where `z*` is the bilinearly sampled rendered depth
/// (held constant). Returns the value and per-vertex position gradients.
pub fn depth_align_loss(scene: &Scene, out: &RenderOutput, camera: &CameraModel) -> (f64, Vec<Vec3>) {
    let nv = scene.num_vertices();
    let mut grads = vec![Vec3::zeros(); nv];
    let (w, h) = (out.width as usize, out.height as usize);
    let mut hits: Vec<(usize, f64)> = Vec::new();
    for (i, p) in scene.vertices.positions.iter().enumerate() {
        let pc = camera.to_camera(p);
        if !(pc.z >= camera.near) {
            continue;
        }
        let s = camera.project_camera_point(&pc);
        if !(s.x >= 0.0 && s.y >= 0.0 && s.x < w as f64 && s.y < h as f64) {
            continue;
        }
        let (a, d) = bilinear(out, w, h, s.x - 0.5, s.y - 0.5);
        if a > SURFACE_ALPHA {
            hits.push((i, pc.z - d / a));
        }
    }
    if hits.is_empty() {
        return (0.0, grads);
    }
    let m = hits.len() as f64;
    let row = camera.rotation.row(2).transpose();
    let mut total = 0.0;
    for (i, diff) in hits {
        total += diff.abs();
        grads[i] = row * (sign(diff) / m);
    }
    (total / m, grads)
}

/// Bilinear alpha and depth accumulation at continuous pixel-index coordinates, clamped at borders.
fn bilinear(out: &RenderOutput, w: usize, h: usize, x: f64, y: f64) -> (f64, f64) {
    let x = x.clamp(0.0, (w - 1) as f64);
    let y = y.clamp(0.0, (h - 1) as f64);
    let (x0, y0) = (x.floor() as usize, y.floor() as usize);
    let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
    let (fx, fy) = (x - x0 as f64, y - y0 as f64);
    let mut a = 0.0;
    let mut d = 0.0;
    for (xx, yy, wt) in [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x1, y0, fx * (1.0 - fy)),
        (x0, y1, (1.0 - fx) * fy),
        (x1, y1, fx * fy),
    ] {
        a += wt * out.alpha[yy * w + xx];
        d += wt * out.depth_accum[yy * w + xx];
    }
    (a, d)
}

#[cfg(test)]
mod tests;
