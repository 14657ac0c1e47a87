use super::*;
use crate::geometry::{Mat3, Vec3};
use crate::raster::{render, RenderSettings};
use crate::scene::{logit, TriangleTopology, VertexSet};
use crate::sh::{rgb_to_dc, SH_BASIS, SH_COEFFS};

fn camera(w: u32, h: u32) -> CameraModel {
    CameraModel::new(20.0, 20.0, w as f64 / 2.0 + 0.25, h as f64 / 2.0 - 0.125, Mat3::identity(), Vec3::zeros(), w, h, 0.01).unwrap()
}

fn gray(c: f64) -> [f64; SH_COEFFS] {
    let mut sh = [0.0; SH_COEFFS];
    for k in 0..3 {
        sh[k * SH_BASIS] = rgb_to_dc(c);
    }
    sh
}

/// Two triangles forming a square at depth `z`, half extent `r`.
fn square(vs: &mut VertexSet, faces: &mut Vec<[u32; 3]>, z: f64, r: f64, c: f64) {
    let base = vs.len() as u32;
    for (x, y) in [(-r, -r), (r, -r), (r, r), (-r, r)] {
        vs.push(Vec3::new(x, y, z), gray(c), logit(0.9));
    }
    faces.push([base, base + 1, base + 2]);
    faces.push([base, base + 2, base + 3]);
}

fn plane_scene(sigma: f64) -> Scene {
    let mut vs = VertexSet::default();
    let mut faces = Vec::new();
    square(&mut vs, &mut faces, 1.0, 5.0, 0.4);
    Scene::new(vs, TriangleTopology { faces, shared_sigma: sigma }).unwrap()
}

fn weights(beta_n: f64, beta_d: f64) -> LossWeights {
    LossWeights { ssim_lambda: 0.2, beta_n, beta_d }
}

#[test]
fn identical_render_has_zero_photometric_loss() {
    let cam = camera(16, 12);
    let out = render(&plane_scene(0.5), &cam, 0.0, &RenderSettings::default()).unwrap();
    let (t, g) = compute_loss(&out, &out.color, None, &cam, &weights(0.0, 0.0)).unwrap();
    assert_eq!(t.l1, 0.0);
    assert!(t.dssim.abs() < 1e-12);
    assert!(g.color.iter().flatten().all(|v| v.abs() < 1e-9));
}

#[test]
fn constant_shift_l1() {
    let cam = camera(16, 12);
    let out = render(&plane_scene(0.5), &cam, 1.0, &RenderSettings::default()).unwrap();
    let gt: Vec<[f64; 3]> = out.color.iter().map(|p| p.map(|v| v + 0.1)).collect();
    let (t, _) = compute_loss(&out, &gt, None, &cam, &weights(0.0, 0.0)).unwrap();
    assert!((t.l1 - 0.1).abs() < 1e-12);
    assert!((t.total - (0.8 * 0.1 + 0.2 * t.dssim)).abs() < 1e-12);
}

#[test]
fn photometric_gradient_matches_finite_differences() {
    let cam = camera(14, 10);
    let scene = plane_scene(0.5);
    let out = render(&scene, &cam, 0.0, &RenderSettings::default()).unwrap();
    let gt: Vec<[f64; 3]> = (0..out.pixel_count()).map(|i| [(i % 7) as f64 / 7.0, 0.3, (i % 3) as f64 / 3.0]).collect();
    let w = weights(0.0, 0.0);
    let (_, g) = compute_loss(&out, &gt, None, &cam, &w).unwrap();
    let eps = 1e-6;
    for &i in &[0usize, 17, 60, 139] {
        for c in 0..3 {
            let mut p = out.clone();
            p.color[i][c] += eps;
            let mut m = out.clone();
            m.color[i][c] -= eps;
            let fd = (compute_loss(&p, &gt, None, &cam, &w).unwrap().0.total
                - compute_loss(&m, &gt, None, &cam, &w).unwrap().0.total)
                / (2.0 * eps);
            assert!((fd - g.color[i][c]).abs() < 1e-6, "{fd} vs {}", g.color[i][c]);
        }
    }
}

#[test]
fn missing_depth_is_an_error_only_when_weighted() {
    let cam = camera(8, 8);
    let out = render(&plane_scene(0.5), &cam, 0.0, &RenderSettings::default()).unwrap();
    assert!(matches!(
        compute_loss(&out, &out.color, None, &cam, &weights(0.0, 0.01)),
        Err(Error::MissingAux("depth"))
    ));
    assert!(compute_loss(&out, &out.color, None, &cam, &weights(0.0, 0.0)).is_ok());
}

#[test]
fn opacity_loss_at_zero_logits() {
    let mut vs = VertexSet::default();
    for _ in 0..5 {
        vs.push(Vec3::zeros(), [0.0; SH_COEFFS], 0.0);
    }
    let (v, g) = opacity_loss(&vs, 0.0);
    assert_eq!(v, 0.5);
    assert!(g.iter().all(|&x| (x - 0.25 / 5.0).abs() < 1e-15));
}

#[test]
fn plane_normals_and_consistency() {
    let cam = camera(16, 16);
    let out = render(&plane_scene(1e-3), &cam, 1.0, &RenderSettings::default()).unwrap();
    let normals = normals_from_depth(&out, &cam);
    let inner = normals.iter().flatten().count();
    assert!(inner >= 14 * 14 - 4);
    for n in normals.iter().flatten() {
        assert!((n - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-6);
    }
    let (v, ga, _) = normal_consistency(&out, &cam);
    assert!(v.abs() < 1e-3, "{v}");
    assert!(ga.iter().all(|&g| g >= 0.0));
}

#[test]
fn inverse_depth_alignment_absorbs_scale_and_shift() {
    let cam = camera(16, 16);
    let mut vs = VertexSet::default();
    let mut faces = Vec::new();
    square(&mut vs, &mut faces, 1.0, 5.0, 0.4);
    vs.positions[2].z = 2.0;
    let scene = Scene::new(vs, TriangleTopology { faces, shared_sigma: 1e-3 }).unwrap();
    let out = render(&scene, &cam, 1.0, &RenderSettings::default()).unwrap();
    let gt: Vec<f64> = out.depth.iter().map(|&d| if d > 0.0 { 1.0 / (0.5 / d + 0.2) } else { 0.0 }).collect();
    let (v, _, _) = inverse_depth_loss(&out, &gt);
    assert!(v < 1e-9, "{v}");
    let bad: Vec<f64> = out.depth.iter().enumerate().map(|(i, &d)| if i % 2 == 0 { d } else { d * 1.5 }).collect();
    assert!(inverse_depth_loss(&out, &bad).0 > 1e-3);
}

#[test]
fn vertex_depth_loss_examples() {
    let cam = camera(32, 32);
    let mut vs = VertexSet::default();
    let mut faces = Vec::new();
    square(&mut vs, &mut faces, 1.0, 5.0, 0.4);
    vs.push(Vec3::new(0.01, 0.02, 1.1), gray(0.5), 0.0);
    let scene = Scene::new(vs, TriangleTopology { faces, shared_sigma: 1e-4 }).unwrap();
    let out = render(&scene, &cam, 1.0, &RenderSettings::default()).unwrap();
    let (v, g) = depth_align_loss(&scene, &out, &cam);
    assert!((v - 0.1).abs() < 1e-9, "{v}");
    assert_eq!(g[4], Vec3::new(0.0, 0.0, 1.0));
    assert!(g[..4].iter().all(|p| *p == Vec3::zeros()));

    let mut vs = VertexSet::default();
    let mut faces = Vec::new();
    square(&mut vs, &mut faces, 1.0, 0.3, 0.4);
    let small = Scene::new(vs, TriangleTopology { faces, shared_sigma: 1e-4 }).unwrap();
    let out = render(&small, &cam, 1.0, &RenderSettings::default()).unwrap();
    assert!(depth_align_loss(&small, &out, &cam).0 < 1e-3);

    let far = camera(32, 32);
    let mut moved = scene.clone();
    for p in &mut moved.vertices.positions {
        p.x += 100.0;
    }
    let out = render(&moved, &far, 1.0, &RenderSettings::default()).unwrap();
    assert_eq!(depth_align_loss(&moved, &out, &far).0, 0.0);
}
