//! Real spherical harmonics up to degree 3 (16 basis functions per channel).
//!
//! Coefficient layout is channel-major: `coeffs[channel * 16 + k]`. Colors follow
//! the usual splatting convention `max(0, Σ Y_k c_k + 0.5)`.

use crate::geometry::Vec3;

pub const SH_BASIS: usize = 16;
pub const SH_COEFFS: usize = 3 * SH_BASIS;

pub const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

pub type ShCoeffs = [f64; SH_COEFFS];

/// Evaluates the 16 basis functions at a unit direction.
pub fn basis(d: &Vec3) -> [f64; SH_BASIS] {
    let (x, y, z) = (d.x, d.y, d.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        SH_C0,
        -SH_C1 * y,
        SH_C1 * z,
        -SH_C1 * x,
        SH_C2[0] * x * y,
        SH_C2[1] * y * z,
        SH_C2[2] * (2.0 * zz - xx - yy),
        SH_C2[3] * x * z,
        SH_C2[4] * (xx - yy),
        SH_C3[0] * y * (3.0 * xx - yy),
        SH_C3[1] * x * y * z,
        SH_C3[2] * y * (4.0 * zz - xx - yy),
        SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        SH_C3[4] * x * (4.0 * zz - xx - yy),
        SH_C3[5] * z * (xx - yy),
        SH_C3[6] * x * (xx - 3.0 * yy),
    ]
}

/// Partial derivatives of each basis polynomial with respect to (x, y, z).
pub fn basis_gradient(d: &Vec3) -> [Vec3; SH_BASIS] {
    let (x, y, z) = (d.x, d.y, d.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        Vec3::zeros(),
        Vec3::new(0.0, -SH_C1, 0.0),
        Vec3::new(0.0, 0.0, SH_C1),
        Vec3::new(-SH_C1, 0.0, 0.0),
        Vec3::new(y, x, 0.0) * SH_C2[0],
        Vec3::new(0.0, z, y) * SH_C2[1],
        Vec3::new(-2.0 * x, -2.0 * y, 4.0 * z) * SH_C2[2],
        Vec3::new(z, 0.0, x) * SH_C2[3],
        Vec3::new(2.0 * x, -2.0 * y, 0.0) * SH_C2[4],
        Vec3::new(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0) * SH_C3[0],
        Vec3::new(y * z, x * z, x * y) * SH_C3[1],
        Vec3::new(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z) * SH_C3[2],
        Vec3::new(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy) * SH_C3[3],
        Vec3::new(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z) * SH_C3[4],
        Vec3::new(2.0 * x * z, -2.0 * y * z, xx - yy) * SH_C3[5],
        Vec3::new(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0) * SH_C3[6],
    ]
}

/// Per-channel SH value before the +0.5 shift and clamp.
#[inline]
pub fn raw_color(coeffs: &ShCoeffs, b: &[f64; SH_BASIS]) -> [f64; 3] {
    let mut out = [0.0; 3];
    for (c, o) in out.iter_mut().enumerate() {
        *o = coeffs[c * SH_BASIS..(c + 1) * SH_BASIS]
            .iter()
            .zip(b.iter())
            .map(|(a, b)| a * b)
            .sum();
    }
    out
}

/// RGB color seen along `view_dir` (unit length).
pub fn eval_sh_color(coeffs: &ShCoeffs, view_dir: &Vec3) -> [f64; 3] {
    let raw = raw_color(coeffs, &basis(view_dir));
    raw.map(|v| (v + 0.5).max(0.0))
}

/// DC coefficient producing `color` under the +0.5 convention.
#[inline]
pub fn rgb_to_dc(color: f64) -> f64 {
    (color - 0.5) / SH_C0
}

/// View-independent base color (DC term only).
pub fn dc_color(coeffs: &ShCoeffs) -> [f64; 3] {
    [0, 1, 2].map(|c| (coeffs[c * SH_BASIS] * SH_C0 + 0.5).max(0.0))
}
