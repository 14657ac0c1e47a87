//! Linear algebra aliases, the pinhole camera and screen-space triangle quantities.
//!
//! Screen coordinates are continuous pixel coordinates: pixel `(i, j)` covers
//! `[i, i + 1) x [j, j + 1)` and its center sits at `(i + 0.5, j + 0.5)`.
//! The camera frame follows the usual computer-vision convention (x right,
//! y down, z forward).

use nalgebra::{Matrix3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Vec2 = Vector2<f64>;
pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Minimum screen-space area (px²) for a triangle to be rasterized.
pub const MIN_SCREEN_AREA: f64 = 1e-12;
/// Minimum screen-space edge length (px).
pub const MIN_SCREEN_EDGE: f64 = 1e-9;

const ORTHONORMAL_TOL: f64 = 1e-9;

/// Pinhole camera with a world-to-camera rigid transform.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    /// World-to-camera rotation.
    pub rotation: Mat3,
    /// World-to-camera translation.
    pub translation: Vec3,
    pub width: u32,
    pub height: u32,
    pub near: f64,
}

impl CameraModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        rotation: Mat3,
        translation: Vec3,
        width: u32,
        height: u32,
        near: f64,
    ) -> Result<Self> {
        let cam = CameraModel { fx, fy, cx, cy, rotation, translation, width, height, near };
        cam.validate()?;
        Ok(cam)
    }

    /// Camera at `eye` looking at `target`; `up` fixes the roll (image y points away from it).
    #[allow(clippy::too_many_arguments)]
    pub fn look_at(
        eye: Vec3,
        target: Vec3,
        up: Vec3,
        fx: f64,
        fy: f64,
        width: u32,
        height: u32,
        near: f64,
    ) -> Result<Self> {
        let forward = (target - eye).try_normalize(1e-12).ok_or_else(|| {
            Error::InvalidCamera("look_at: eye and target coincide".into())
        })?;
        let right = forward.cross(&up).try_normalize(1e-12).ok_or_else(|| {
            Error::InvalidCamera("look_at: up vector parallel to view direction".into())
        })?;
        let down = forward.cross(&right);
        let rotation = Mat3::from_rows(&[right.transpose(), down.transpose(), forward.transpose()]);
        let translation = -(rotation * eye);
        CameraModel::new(
            fx,
            fy,
            width as f64 * 0.5,
            height as f64 * 0.5,
            rotation,
            translation,
            width,
            height,
            near,
        )
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.fx, self.fy, self.cx, self.cy, self.near]
            .iter()
            .chain(self.rotation.iter())
            .chain(self.translation.iter())
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidCamera("non-finite parameter".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(Error::InvalidCamera(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if self.near <= 0.0 {
            return Err(Error::InvalidCamera(format!("near plane must be positive ({})", self.near)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidCamera("image size must be nonzero".into()));
        }
        let gram = self.rotation.transpose() * self.rotation;
        let dev = (gram - Mat3::identity()).abs().max();
        if dev > ORTHONORMAL_TOL {
            return Err(Error::InvalidCamera(format!(
                "rotation is not orthonormal (max |RᵀR - I| = {dev:.3e})"
            )));
        }
        if self.rotation.determinant() < 0.0 {
            return Err(Error::InvalidCamera("rotation has negative determinant".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn to_camera(&self, p: &Vec3) -> Vec3 {
        self.rotation * p + self.translation
    }

    /// Camera center in world coordinates.
    pub fn center(&self) -> Vec3 {
        -(self.rotation.transpose() * self.translation)
    }

    /// Same pose, intrinsics and resolution multiplied by `factor`.
    pub fn scaled(&self, factor: u32) -> CameraModel {
        let s = factor as f64;
        CameraModel {
            fx: self.fx * s,
            fy: self.fy * s,
            cx: self.cx * s,
            cy: self.cy * s,
            width: self.width * factor,
            height: self.height * factor,
            ..self.clone()
        }
    }

    #[inline]
    pub fn project_camera_point(&self, pc: &Vec3) -> Vec2 {
        Vec2::new(self.fx * pc.x / pc.z + self.cx, self.fy * pc.y / pc.z + self.cy)
    }
}

/// Projects a world point; returns its screen position and view-space depth.
///
/// No culling happens here: points behind the near plane still get a (meaningless)
/// screen position and the caller decides what to do with them.
#[inline]
pub fn project_vertex(cam: &CameraModel, v: &Vec3) -> (Vec2, f64) {
    let pc = cam.to_camera(v);
    (cam.project_camera_point(&pc), pc.z)
}

#[inline]
pub(crate) fn cross2(a: &Vec2, b: &Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Edge-length weighted barycenter of a triangle: its incenter.
pub fn incenter(a: &Vec2, b: &Vec2, c: &Vec2) -> Result<Vec2> {
    let la = (c - b).norm();
    let lb = (a - c).norm();
    let lc = (b - a).norm();
    let area = 0.5 * cross2(&(b - a), &(c - a)).abs();
    if area < MIN_SCREEN_AREA || la.min(lb).min(lc) < MIN_SCREEN_EDGE {
        return Err(Error::DegenerateTriangle);
    }
    Ok((a * la + b * lb + c * lc) / (la + lb + lc))
}

/// Unit normal of the plane through three points, oriented by winding.
/// Degenerate input yields the zero vector.
pub fn triangle_normal(v0: &Vec3, v1: &Vec3, v2: &Vec3) -> Vec3 {
    let n = (v1 - v0).cross(&(v2 - v0));
    let len = n.norm();
    if len <= 1e-300 || !len.is_finite() {
        Vec3::zeros()
    } else {
        n / len
    }
}

/// A projected triangle with its edge half-planes and incenter.
///
/// Edge `i` runs from vertex `i` to vertex `i + 1 (mod 3)`. `normals[i]`
/// points out of the triangle and `L_i(p) = normals[i]·p + offsets[i]`.
#[derive(Clone, Debug)]
pub struct ScreenTriangle {
    pub vertices: [Vec2; 3],
    pub depths: [f64; 3],
    pub normals: [Vec2; 3],
    pub offsets: [f64; 3],
    pub incenter: Vec2,
    /// `φ(s)`, which equals minus the inradius.
    pub incenter_sdf: f64,
    area2: f64,
    edge_len: [f64; 3],
    perimeter: f64,
}

/// Which half-plane realises `φ(p)` and the resulting window value.
#[derive(Clone, Copy, Debug)]
pub struct WindowSample {
    pub value: f64,
    pub ratio: f64,
    pub edge: usize,
}

impl ScreenTriangle {
    pub fn new(vertices: [Vec2; 3], depths: [f64; 3]) -> Result<Self> {
        let [a, b, c] = vertices;
        let area2 = cross2(&(b - a), &(c - a));
        let edges = [b - a, c - b, a - c];
        let edge_len = [edges[0].norm(), edges[1].norm(), edges[2].norm()];
        if !area2.is_finite()
            || 0.5 * area2.abs() < MIN_SCREEN_AREA
            || edge_len.iter().any(|&l| l < MIN_SCREEN_EDGE)
        {
            return Err(Error::DegenerateTriangle);
        }
        let sgn = area2.signum();
        let mut normals = [Vec2::zeros(); 3];
        let mut offsets = [0.0; 3];
        for i in 0..3 {
            let e = edges[i];
            let n = Vec2::new(e.y, -e.x) * (sgn / edge_len[i]);
            normals[i] = n;
            offsets[i] = -n.dot(&vertices[i]);
        }
        let perimeter = edge_len.iter().sum::<f64>();
        // Edge i is opposite vertex (i + 2) % 3.
        let incenter = (a * edge_len[1] + b * edge_len[2] + c * edge_len[0]) / perimeter;
        let inradius = area2.abs() / perimeter;
        Ok(ScreenTriangle {
            vertices,
            depths,
            normals,
            offsets,
            incenter,
            incenter_sdf: -inradius,
            area2,
            edge_len,
            perimeter,
        })
    }

    /// Twice the signed area (positive for counter-clockwise in x-right/y-up terms).
    pub fn signed_area2(&self) -> f64 {
        self.area2
    }

    pub fn inradius(&self) -> f64 {
        -self.incenter_sdf
    }

    #[inline]
    pub fn half_plane(&self, i: usize, p: &Vec2) -> f64 {
        self.normals[i].dot(p) + self.offsets[i]
    }

    /// `φ(p) = max_i L_i(p)`: negative inside, zero on the boundary, positive outside.
    #[inline]
    pub fn signed_distance(&self, p: &Vec2) -> f64 {
        self.half_plane(0, p).max(self.half_plane(1, p)).max(self.half_plane(2, p))
    }

    /// Window function `(ReLU(φ(p)/φ(s)))^σ`.
    #[inline]
    pub fn window(&self, p: &Vec2, sigma: f64) -> f64 {
        self.window_sample(p, sigma).value
    }

    #[inline]
    pub fn window_sample(&self, p: &Vec2, sigma: f64) -> WindowSample {
        let l = [self.half_plane(0, p), self.half_plane(1, p), self.half_plane(2, p)];
        // Ties resolve to the lowest edge index.
        let mut edge = 0;
        if l[1] > l[edge] {
            edge = 1;
        }
        if l[2] > l[edge] {
            edge = 2;
        }
        let ratio = l[edge] / self.incenter_sdf;
        let value = if ratio > 0.0 { ratio.powf(sigma) } else { 0.0 };
        WindowSample { value, ratio, edge }
    }

    /// Barycentric coordinates `(u, v, w)` with `p = u·A + v·B + w·C`.
    #[inline]
    pub fn barycentric(&self, p: &Vec2) -> [f64; 3] {
        let [a, b, c] = &self.vertices;
        let u = cross2(&(b - p), &(c - p)) / self.area2;
        let v = cross2(&(c - p), &(a - p)) / self.area2;
        [u, v, 1.0 - u - v]
    }

    #[inline]
    pub fn interpolate_depth(&self, bary: &[f64; 3]) -> f64 {
        bary[0] * self.depths[0] + bary[1] * self.depths[1] + bary[2] * self.depths[2]
    }

    /// Gradient of the window value with respect to the three screen vertices,
    /// given the upstream derivative `d_value`. Zero outside the triangle.
    pub(crate) fn window_vertex_grad(
        &self,
        p: &Vec2,
        sigma: f64,
        sample: &WindowSample,
        d_value: f64,
        out: &mut [Vec2; 3],
    ) {
        if sample.ratio <= 0.0 || d_value == 0.0 {
            return;
        }
        // I = ratio^σ, ratio = -L_k / r with r the inradius.
        let d_ratio = d_value * sigma * sample.value / sample.ratio;
        let k = sample.edge;
        let k1 = (k + 1) % 3;
        let sgn = self.area2.signum();
        let r = self.inradius();
        let p0 = self.vertices[k];
        let p1 = self.vertices[k1];
        let e = p1 - p0;
        let q = p - p0;
        let len = self.edge_len[k];
        let x = cross2(&e, &q);
        let l_k = -sgn * x / len;

        // ∂ratio/∂L_k = -1/r and ∂ratio/∂r = L_k / r².
        let d_l = -d_ratio / r;
        let d_r = d_ratio * l_k / (r * r);

        // L_k = -sgn·X/len.
        let dx_dp1 = Vec2::new(q.y, -q.x);
        let dx_dp0 = Vec2::new(e.y - q.y, q.x - e.x);
        let dlen_dp1 = e / len;
        let coef_x = -sgn / len;
        let coef_len = sgn * x / (len * len);
        out[k1] += (dx_dp1 * coef_x + dlen_dp1 * coef_len) * d_l;
        out[k] += (dx_dp0 * coef_x - dlen_dp1 * coef_len) * d_l;

        // r = sgn·area2 / perimeter.
        let darea = self.area2_vertex_grad();
        let edges = [
            self.vertices[1] - self.vertices[0],
            self.vertices[2] - self.vertices[1],
            self.vertices[0] - self.vertices[2],
        ];
        for j in 0..3 {
            out[j] += darea[j] * (d_r * sgn / self.perimeter);
        }
        let coef_perim = -d_r * r / self.perimeter;
        for i in 0..3 {
            let u = edges[i] / self.edge_len[i];
            out[(i + 1) % 3] += u * coef_perim;
            out[i] -= u * coef_perim;
        }
    }

    /// ∂(area2)/∂vertex for each vertex.
    #[inline]
    fn area2_vertex_grad(&self) -> [Vec2; 3] {
        let [a, b, c] = self.vertices;
        [
            Vec2::new(b.y - c.y, c.x - b.x),
            Vec2::new(c.y - a.y, a.x - c.x),
            Vec2::new(a.y - b.y, b.x - a.x),
        ]
    }

    /// Accumulates the gradient of the barycentric coordinates (given upstream
    /// `d_bary`) into the screen vertices.
    pub(crate) fn barycentric_vertex_grad(
        &self,
        p: &Vec2,
        bary: &[f64; 3],
        d_bary: &[f64; 3],
        out: &mut [Vec2; 3],
    ) {
        let darea = self.area2_vertex_grad();
        let inv = 1.0 / self.area2;
        let s: f64 = (0..3).map(|k| d_bary[k] * bary[k]).sum();
        for j in 0..3 {
            out[j] -= darea[j] * (s * inv);
        }
        // X_k = cross(P_{k+1} - p, P_{k+2} - p).
        for k in 0..3 {
            if d_bary[k] == 0.0 {
                continue;
            }
            let i1 = (k + 1) % 3;
            let i2 = (k + 2) % 3;
            let a = self.vertices[i1] - p;
            let b = self.vertices[i2] - p;
            let g = d_bary[k] * inv;
            out[i1] += Vec2::new(b.y, -b.x) * g;
            out[i2] += Vec2::new(-a.y, a.x) * g;
        }
    }
}
