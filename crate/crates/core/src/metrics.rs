//! Image quality metrics and their gradients.
//!
//! SSIM uses an 11×11 Gaussian window (σ = 1.5) applied as a zero-padded
//! "same" convolution, with `C1 = 0.01²`, `C2 = 0.03²`, averaged over pixels
//! and channels.

use crate::error::{Error, Result};

pub const PSNR_CAP_DB: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

fn check(a: usize, b: usize, w: u32, h: u32) -> Result<()> {
    let n = (w * h) as usize;
    if a != n {
        return Err(Error::shape(n, a));
    }
    if b != n {
        return Err(Error::shape(n, b));
    }
    Ok(())
}

pub fn mse(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| (0..3).map(|c| (x[c] - y[c]).powi(2)).sum::<f64>())
        .sum();
    sum / (3 * a.len()).max(1) as f64
}

/// Peak signal-to-noise ratio for images in `[0, 1]`, capped at 99 dB.
pub fn psnr(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let m = mse(a, b);
    if m <= 0.0 {
        return PSNR_CAP_DB;
    }
    (-10.0 * m.log10()).min(PSNR_CAP_DB)
}

pub fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let r = (SSIM_WINDOW / 2) as f64;
    for (i, v) in k.iter_mut().enumerate() {
        let x = i as f64 - r;
        *v = (-x * x / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = k.iter().sum();
    k.map(|v| v / s)
}

/// Separable zero-padded "same" convolution with the symmetric SSIM kernel.
fn blur(src: &[f64], w: usize, h: usize, k: &[f64; SSIM_WINDOW], tmp: &mut Vec<f64>, out: &mut Vec<f64>) {
    let r = SSIM_WINDOW as isize / 2;
    tmp.clear();
    tmp.resize(w * h, 0.0);
    out.clear();
    out.resize(w * h, 0.0);
    for y in 0..h {
        let row = &src[y * w..(y + 1) * w];
        for x in 0..w {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let xx = x as isize + i as isize - r;
                if xx >= 0 && (xx as usize) < w {
                    s += kv * row[xx as usize];
                }
            }
            tmp[y * w + x] = s;
        }
    }
    for y in 0..h {
        for x in 0..w {
            let mut s = 0.0;
            for (i, kv) in k.iter().enumerate() {
                let yy = y as isize + i as isize - r;
                if yy >= 0 && (yy as usize) < h {
                    s += kv * tmp[yy as usize * w + x];
                }
            }
            out[y * w + x] = s;
        }
    }
}

/// Mean SSIM of `a` against `b`.
pub fn ssim(a: &[[f64; 3]], b: &[[f64; 3]], width: u32, height: u32) -> Result<f64> {
    Ok(ssim_impl(a, b, width, height, false)?.0)
}

/// Mean SSIM and its gradient with respect to `a`.
pub fn ssim_with_grad(a: &[[f64; 3]], b: &[[f64; 3]], width: u32, height: u32) -> Result<(f64, Vec<[f64; 3]>)> {
    ssim_impl(a, b, width, height, true)
}

fn ssim_impl(a: &[[f64; 3]], b: &[[f64; 3]], width: u32, height: u32, grad: bool) -> Result<(f64, Vec<[f64; 3]>)> {
    check(a.len(), b.len(), width, height)?;
    let (w, h) = (width as usize, height as usize);
    let n = w * h;
    if n == 0 {
        return Ok((1.0, Vec::new()));
    }
    let k = gaussian_kernel();
    let norm = 1.0 / (3 * n) as f64;
    let mut total = 0.0;
    let mut out = if grad { vec![[0.0; 3]; n] } else { Vec::new() };
    let mut tmp = Vec::new();
    let (mut mx, mut my, mut sxx, mut syy, mut sxy) = (Vec::new(), Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for c in 0..3 {
        let x: Vec<f64> = a.iter().map(|p| p[c]).collect();
        let y: Vec<f64> = b.iter().map(|p| p[c]).collect();
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(&y).map(|(u, v)| u * v).collect();
        blur(&x, w, h, &k, &mut tmp, &mut mx);
        blur(&y, w, h, &k, &mut tmp, &mut my);
        blur(&xx, w, h, &k, &mut tmp, &mut sxx);
        blur(&yy, w, h, &k, &mut tmp, &mut syy);
        blur(&xy, w, h, &k, &mut tmp, &mut sxy);
        let mut da = vec![0.0; if grad { n } else { 0 }];
        let mut db = da.clone();
        let mut dc = da.clone();
        for i in 0..n {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cxy = sxy[i] - ux * uy;
            let n1 = 2.0 * ux * uy + C1;
            let n2 = 2.0 * cxy + C2;
            let d1 = ux * ux + uy * uy + C1;
            let d2 = vx + vy + C2;
            let s = n1 * n2 / (d1 * d2);
            total += s;
            if grad {
                // ∂S/∂μx, ∂S/∂σx², ∂S/∂σxy, then expressed through the blurred moments.
                let a_mu = 2.0 * uy * n2 / (d1 * d2) - s * 2.0 * ux / d1;
                let b_var = -s / d2;
                let c_cov = 2.0 * n1 / (d1 * d2);
                da[i] = (a_mu - 2.0 * b_var * ux - c_cov * uy) * norm;
                db[i] = b_var * norm;
                dc[i] = c_cov * norm;
            }
        }
        if grad {
            let (mut ga, mut gb, mut gc) = (Vec::new(), Vec::new(), Vec::new());
            blur(&da, w, h, &k, &mut tmp, &mut ga);
            blur(&db, w, h, &k, &mut tmp, &mut gb);
            blur(&dc, w, h, &k, &mut tmp, &mut gc);
            for i in 0..n {
                out[i][c] = ga[i] + 2.0 * x[i] * gb[i] + y[i] * gc[i];
            }
        }
    }
    Ok((total * norm, out))
}
