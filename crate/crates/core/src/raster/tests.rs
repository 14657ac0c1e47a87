use super::*;
use crate::geometry::Mat3;
use crate::scene::{logit, TriangleTopology, VertexSet};
use crate::sh::{rgb_to_dc, SH_COEFFS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn camera(w: u32, h: u32) -> CameraModel {
    CameraModel::new(40.0, 40.0, w as f64 / 2.0, h as f64 / 2.0, Mat3::identity(), Vec3::zeros(), w, h, 0.01)
        .unwrap()
}

fn flat_sh(rgb: [f64; 3]) -> [f64; SH_COEFFS] {
    let mut c = [0.0; SH_COEFFS];
    for ch in 0..3 {
        c[ch * 16] = rgb_to_dc(rgb[ch]);
    }
    c
}

fn scene_from(tris: &[([Vec3; 3], [f64; 3], f64)], sigma: f64) -> Scene {
    let mut vs = VertexSet::default();
    let mut faces = Vec::new();
    for (pts, rgb, o) in tris {
        let i = pts.map(|p| vs.push(p, flat_sh(*rgb), logit(*o)));
        faces.push(i);
    }
    Scene::new(vs, TriangleTopology { faces, shared_sigma: sigma }).unwrap()
}

fn big_triangle(z: f64) -> [Vec3; 3] {
    [Vec3::new(-3.0, -3.0, z), Vec3::new(3.0, -3.0, z), Vec3::new(0.0, 3.0, z)]
}

#[test]
fn compositor_weights_sum_with_transmittance() {
    let mut c = Compositor::default();
    let mut total = 0.0;
    for a in [0.3, 0.5, 0.9, 0.2] {
        total += c.add(a);
    }
    assert!((total + c.transmittance - 1.0).abs() < 1e-15);
    let mut c = Compositor::default();
    assert_eq!(c.add(1.0), 1.0);
    assert_eq!(c.transmittance, 0.0);
    assert!(c.saturated());
}

#[test]
fn empty_scene_renders_background() {
    let scene = Scene::default();
    let settings = RenderSettings { background: [0.2, 0.4, 0.6], ..Default::default() };
    let out = render(&scene, &camera(8, 6), 0.0, &settings).unwrap();
    assert_eq!(out.color.len(), 48);
    assert!(out.color.iter().all(|c| *c == [0.2, 0.4, 0.6]));
    assert!(out.alpha.iter().all(|&a| a == 0.0));
    assert!(out.primary_face.iter().all(Option::is_none));
}

#[test]
fn single_triangle_matches_direct_evaluation() {
    let scene = scene_from(&[(big_triangle(2.0), [0.8, 0.2, 0.4], 0.7)], 1.0);
    let cam = camera(32, 32);
    let settings = RenderSettings { background: [0.1, 0.1, 0.1], ..Default::default() };
    let out = render(&scene, &cam, 0.0, &settings).unwrap();
    let screen = scene.vertices.positions.iter().map(|p| crate::geometry::project_vertex(&cam, p).0);
    let screen: Vec<Vec2> = screen.collect();
    let tri = ScreenTriangle::new([screen[0], screen[1], screen[2]], [2.0; 3]).unwrap();
    let o = triangle_opacity(&scene, 0.0);
    for y in 0..32 {
        for x in 0..32 {
            let p = Vec2::new(x as f64 + 0.5, y as f64 + 0.5);
            let a = o * tri.window(&p, 1.0);
            let i = y * 32 + x;
            assert!((out.alpha[i] - a).abs() < 1e-12);
            assert!((out.color[i][0] - (a * 0.8 + (1.0 - a) * 0.1)).abs() < 1e-12);
            if a > 0.0 {
                assert!((out.depth[i] - 2.0).abs() < 1e-12);
                assert!((out.normal[i] - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
                assert_eq!(out.primary_face[i], Some(0));
            }
        }
    }
}

fn triangle_opacity(scene: &Scene, o_t: f64) -> f64 {
    crate::scene::triangle_opacity(&scene.vertices, &scene.topology.faces[0], o_t)
}

#[test]
fn nearer_face_composites_first() {
    let far = (big_triangle(4.0), [0.0, 0.0, 1.0], 0.999);
    let near = (big_triangle(2.0), [1.0, 0.0, 0.0], 0.999);
    let cam = camera(16, 16);
    let settings = RenderSettings::default().recording();
    for order in [[far, near], [near, far]] {
        let scene = scene_from(&order, 1e-3);
        let out = render(&scene, &cam, 0.0, &settings).unwrap();
        let c = out.color[8 * 16 + 8];
        assert!(c[0] > 0.9 && c[2] < 0.1, "{c:?}");
        let log = out.contributions.as_ref().unwrap();
        let list = log.pixel(8, 8);
        let z0 = scene.vertices.positions[scene.topology.faces[list[0].face as usize][0] as usize].z;
        assert_eq!(z0, 2.0);
    }
}

#[test]
fn equal_depth_ties_resolve_by_face_index() {
    let a = (big_triangle(2.0), [1.0, 0.0, 0.0], 0.5);
    let b = (big_triangle(2.0), [0.0, 1.0, 0.0], 0.5);
    let scene = scene_from(&[a, b], 1.0);
    let out = render(&scene, &camera(16, 16), 0.0, &RenderSettings::default().recording()).unwrap();
    let log = out.contributions.unwrap();
    let list = log.pixel(8, 8);
    assert_eq!(list.iter().map(|c| c.face).collect::<Vec<_>>(), vec![0, 1]);
}

#[test]
fn faces_crossing_near_plane_are_culled() {
    let tri = [Vec3::new(-1.0, -1.0, 0.005), Vec3::new(1.0, -1.0, 2.0), Vec3::new(0.0, 1.0, 2.0)];
    let scene = scene_from(&[(tri, [1.0; 3], 0.9)], 1.0);
    let out = render(&scene, &camera(16, 16), 0.0, &RenderSettings::default()).unwrap();
    assert!(out.alpha.iter().all(|&a| a == 0.0));
    let settings = RenderSettings { near: Some(0.001), ..Default::default() };
    let out = render(&scene, &camera(16, 16), 0.0, &settings).unwrap();
    assert!(out.alpha.iter().any(|&a| a > 0.0));
}

#[test]
fn supersampling_box_filters() {
    let scene = scene_from(&[(big_triangle(3.0), [0.3, 0.6, 0.9], 0.8)], 0.5);
    let cam = camera(8, 8);
    let lo = render(&scene, &cam.scaled(2), 0.0, &RenderSettings::default()).unwrap();
    let hi = render(&scene, &cam, 0.0, &RenderSettings::default().with_supersample(2)).unwrap();
    for y in 0..8 {
        for x in 0..8 {
            let mut a = 0.0;
            for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                a += lo.alpha[(2 * y + dy) * 16 + 2 * x + dx];
            }
            assert!((hi.alpha[y * 8 + x] - a / 4.0).abs() < 1e-12);
        }
    }
}

#[test]
fn backward_requires_contribution_log() {
    let scene = scene_from(&[(big_triangle(2.0), [0.5; 3], 0.5)], 1.0);
    let cam = camera(8, 8);
    let out = render(&scene, &cam, 0.0, &RenderSettings::default()).unwrap();
    let g = PixelGrads::from_color(vec![[1.0; 3]; 64]);
    let err = render_backward(&scene, &cam, 0.0, &RenderSettings::default(), &out, &g).unwrap_err();
    assert!(matches!(err, Error::MissingContributionLog));
}

fn random_scene(rng: &mut ChaCha8Rng, n: usize, sigma: f64) -> Scene {
    let mut vs = VertexSet::default();
    let mut faces = Vec::new();
    for _ in 0..n {
        let c = Vec3::new(rng.random_range(-0.6..0.6), rng.random_range(-0.6..0.6), rng.random_range(2.0..4.0));
        let mut idx = [0u32; 3];
        for k in idx.iter_mut() {
            let p = c + Vec3::new(rng.random_range(-0.8..0.8), rng.random_range(-0.8..0.8), rng.random_range(-0.3..0.3));
            let mut sh = [0.0; SH_COEFFS];
            for v in sh.iter_mut() {
                *v = rng.random_range(-0.15..0.15);
            }
            for ch in 0..3 {
                sh[ch * 16] = rgb_to_dc(rng.random_range(0.2..0.8));
            }
            *k = vs.push(p, sh, rng.random_range(-1.0..2.0));
        }
        faces.push(idx);
    }
    Scene::new(vs, TriangleTopology { faces, shared_sigma: sigma }).unwrap()
}

struct Weights {
    color: Vec<[f64; 3]>,
    alpha: Vec<f64>,
    depth: Vec<f64>,
    normal: Vec<Vec3>,
}

fn loss(out: &RenderOutput, w: &Weights) -> f64 {
    let mut l = 0.0;
    for i in 0..out.pixel_count() {
        for c in 0..3 {
            l += w.color[i][c] * out.color[i][c];
        }
        l += w.alpha[i] * out.alpha[i] + w.depth[i] * out.depth_accum[i] + w.normal[i].dot(&out.normal_accum[i]);
    }
    l
}

#[test]
fn backward_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let scene = random_scene(&mut rng, 4, 1.5);
    let cam = camera(24, 20);
    let settings = RenderSettings { background: [0.3, 0.5, 0.7], supersample: 2, ..Default::default() }.recording();
    let o_t = 0.1;
    let n = 24 * 20;
    let w = Weights {
        color: (0..n).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect(),
        alpha: (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
        depth: (0..n).map(|_| rng.random_range(-0.3..0.3)).collect(),
        normal: (0..n).map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect(),
    };
    let out = render(&scene, &cam, o_t, &settings).unwrap();
    let grads = PixelGrads {
        color: w.color.clone(),
        alpha: Some(w.alpha.clone()),
        depth: Some(w.depth.clone()),
        normal: Some(w.normal.clone()),
    };
    let g = render_backward(&scene, &cam, o_t, &settings, &out, &grads).unwrap();
    let f = |s: &Scene| loss(&render(s, &cam, o_t, &settings).unwrap(), &w);
    let h = 1e-6;
    let check = |analytic: f64, fd: f64, what: &str| {
        let tol = 1e-4 * analytic.abs().max(fd.abs()).max(1e-2);
        assert!((analytic - fd).abs() < tol, "{what}: analytic {analytic} fd {fd}");
    };
    for v in 0..scene.num_vertices() {
        for axis in 0..3 {
            let mut p = scene.clone();
            p.vertices.positions[v][axis] += h;
            let mut m = scene.clone();
            m.vertices.positions[v][axis] -= h;
            check(g.d_positions[v][axis], (f(&p) - f(&m)) / (2.0 * h), &format!("pos v{v} a{axis}"));
        }
        for k in [0, 3, 17, 40] {
            let mut p = scene.clone();
            p.vertices.sh[v][k] += h;
            let mut m = scene.clone();
            m.vertices.sh[v][k] -= h;
            check(g.d_sh[v][k], (f(&p) - f(&m)) / (2.0 * h), &format!("sh v{v} k{k}"));
        }
        let mut p = scene.clone();
        p.vertices.opacity_logits[v] += h;
        let mut m = scene.clone();
        m.vertices.opacity_logits[v] -= h;
        check(g.d_opacity_logits[v], (f(&p) - f(&m)) / (2.0 * h), &format!("opacity v{v}"));
    }
}

#[test]
fn render_is_identical_across_thread_counts() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let scene = random_scene(&mut rng, 30, 1.0);
    let cam = camera(48, 40);
    let settings = RenderSettings::default().with_supersample(2).recording();
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let out = render(&scene, &cam, 0.0, &settings).unwrap();
            let grads = PixelGrads::from_color(out.color.clone());
            let g = render_backward(&scene, &cam, 0.0, &settings, &out, &grads).unwrap();
            (out.color, g)
        })
    };
    let (c1, g1) = run(1);
    let (c4, g4) = run(4);
    assert_eq!(c1, c4);
    assert_eq!(g1, g4);
}

#[test]
fn max_weight_tracks_blending_weights() {
    let scene = scene_from(&[(big_triangle(2.0), [0.5; 3], 0.6), (big_triangle(3.0), [0.5; 3], 0.6)], 1e-3);
    let out = render(&scene, &camera(16, 16), 0.0, &RenderSettings::default().recording()).unwrap();
    let log = out.contributions.as_ref().unwrap();
    let mut expect = [0.0f64; 2];
    for list in log.pixels() {
        for c in list {
            expect[c.face as usize] = expect[c.face as usize].max(c.weight());
        }
    }
    assert_eq!(out.max_weight, expect.to_vec());
    assert!((out.max_weight[1] - 0.4 * 0.6).abs() < 1e-2);
}
