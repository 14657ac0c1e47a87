use super::*;
use crate::delaunay::{delaunay_3d, dual_edges};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rand_vec(rng: &mut ChaCha8Rng, r: f64) -> Vec3 {
    Vec3::new(rng.random_range(-r..r), rng.random_range(-r..r), rng.random_range(-r..r))
}

fn random_soup(rng: &mut ChaCha8Rng, n: usize) -> Vec<[Vec3; 3]> {
    (0..n)
        .map(|_| {
            let c = rand_vec(rng, 5.0);
            [c + rand_vec(rng, 0.5), c + rand_vec(rng, 0.5), c + rand_vec(rng, 0.5)]
        })
        .collect()
}

#[test]
fn single_triangle_bvh() {
    let t = [Vec3::zeros(), Vec3::new(1.0, 2.0, 0.0), Vec3::new(-1.0, 0.5, 3.0)];
    let b = build_bvh(&[t]).unwrap();
    assert_eq!(b.nodes.len(), 1);
    assert_eq!(*b.nodes[0].bounds(), Aabb { min: Vec3::new(-1.0, 0.0, 0.0), max: Vec3::new(1.0, 2.0, 3.0) });
    assert!(build_bvh(&[]).is_err());
}

#[test]
fn triangles_on_a_line_build_a_shallow_tree() {
    let soup: Vec<[Vec3; 3]> = (0..8)
        .map(|i| {
            let x = 2.0 * i as f64;
            [Vec3::new(x, 0.0, 0.0), Vec3::new(x + 1.0, 0.0, 0.0), Vec3::new(x, 1.0, 0.0)]
        })
        .collect();
    let b = build_bvh(&soup).unwrap();
    assert!(b.depth() <= 3);
    match &b.nodes[0] {
        BvhNode::Inner { left, right, .. } => {
            let l = b.nodes[*left as usize].bounds();
            let r = b.nodes[*right as usize].bounds();
            assert!(l.max.x < r.min.x);
        }
        BvhNode::Leaf { .. } => panic!("root should split"),
    }
}

#[test]
fn bvh_containment_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let soup = random_soup(&mut rng, 1000);
    let b = build_bvh(&soup).unwrap();
    let mut seen = vec![0; soup.len()];
    for node in &b.nodes {
        match *node {
            BvhNode::Inner { bounds, left, right } => {
                assert!(bounds.contains(b.nodes[left as usize].bounds()));
                assert!(bounds.contains(b.nodes[right as usize].bounds()));
            }
            BvhNode::Leaf { bounds, first, count } => {
                assert!(count as usize <= MAX_LEAF_SIZE && count > 0);
                assert!(b.nodes[0].bounds().contains(&bounds));
                for &i in &b.indices[first as usize..(first + count) as usize] {
                    assert!(bounds.contains(&Aabb::of_triangle(&soup[i as usize])));
                    seen[i as usize] += 1;
                }
            }
        }
    }
    assert!(seen.iter().all(|&c| c == 1));
}

#[test]
fn segment_examples() {
    let tri = [Vec3::new(-1.0, -1.0, 0.0), Vec3::new(1.0, -1.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
    assert!(segment_intersects_triangle(&Vec3::new(0.0, 0.0, -1.0), &Vec3::new(0.0, 0.0, 1.0), &tri));
    assert!(!segment_intersects_triangle(&Vec3::new(0.0, 0.0, 1.0), &Vec3::new(0.3, 0.0, 2.0), &tri));
    // Touching at an endpoint and grazing a vertex both count.
    assert!(segment_intersects_triangle(&Vec3::new(0.0, 0.0, 0.0), &Vec3::new(0.0, 0.0, 2.0), &tri));
    assert!(segment_intersects_triangle(&Vec3::new(-1.0, -1.0, -1.0), &Vec3::new(-1.0, -1.0, 1.0), &tri));
    assert!(!segment_intersects_triangle(&Vec3::new(-1.1, -1.0, -1.0), &Vec3::new(-1.1, -1.0, 1.0), &tri));
    let flat = [Vec3::zeros(), Vec3::x(), Vec3::x() * 2.0];
    assert!(!segment_intersects_triangle(&Vec3::new(0.5, 0.0, -1.0), &Vec3::new(0.5, 0.0, 1.0), &flat));
}

/// Plane clipping followed by a 2D inside test. Returns `None` near boundaries.
fn clip_oracle(p0: &Vec3, p1: &Vec3, tri: &[Vec3; 3]) -> Option<bool> {
    let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
    let nn = n.norm();
    let d0 = n.dot(&(p0 - tri[0])) / nn;
    let d1 = n.dot(&(p1 - tri[0])) / nn;
    let len = (p1 - p0).norm();
    if d0.abs() < 1e-7 * len || d1.abs() < 1e-7 * len {
        return None;
    }
    if d0.signum() == d1.signum() {
        return Some(false);
    }
    let x = p0 + (p1 - p0) * (d0 / (d0 - d1));
    let axis = n.iamax();
    let (a, b) = match axis {
        0 => (1, 2),
        1 => (0, 2),
        _ => (0, 1),
    };
    let p2 = |v: &Vec3| (v[a], v[b]);
    let (px, py) = p2(&x);
    let v: Vec<(f64, f64)> = tri.iter().map(p2).collect();
    let edge = |i: usize| {
        let (ax, ay) = v[i];
        let (bx, by) = v[(i + 1) % 3];
        let l = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
        ((bx - ax) * (py - ay) - (by - ay) * (px - ax)) / l
    };
    let e = [edge(0), edge(1), edge(2)];
    if e.iter().any(|d| d.abs() < 1e-6) {
        return None;
    }
    Some(e.iter().all(|&d| d > 0.0) || e.iter().all(|&d| d < 0.0))
}

#[test]
fn segment_test_matches_clip_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut hits = 0;
    let mut compared = 0;
    for _ in 0..100_000 {
        let tri = [rand_vec(&mut rng, 1.0), rand_vec(&mut rng, 1.0), rand_vec(&mut rng, 1.0)];
        let p0 = rand_vec(&mut rng, 1.5);
        let p1 = rand_vec(&mut rng, 1.5);
        if let Some(expected) = clip_oracle(&p0, &p1, &tri) {
            compared += 1;
            hits += expected as usize;
            assert_eq!(segment_intersects_triangle(&p0, &p1, &tri), expected);
        }
    }
    assert!(compared > 95_000 && hits > 1_000);
}

#[test]
fn bipyramid_selects_the_shared_face() {
    let s3 = 3f64.sqrt() / 2.0;
    let pts = vec![
        Vec3::new(1.0, 0.0, 0.0),
        Vec3::new(-0.5, s3, 0.0),
        Vec3::new(-0.5, -s3, 0.0),
        Vec3::new(0.0, 0.0, 2.0),
        Vec3::new(0.0, 0.0, -2.0),
    ];
    let t = delaunay_3d(&pts).unwrap();
    assert_eq!(t.tets.len(), 2);
    let edges = dual_edges(&t);
    let soup = [[pts[0] * 3.0, pts[1] * 3.0, pts[2] * 3.0]];
    let bvh = build_bvh(&soup).unwrap();
    let mesh = restrict(&t, &edges, &bvh);
    assert_eq!(mesh.faces.len(), 1);
    let mut f = mesh.faces[0];
    f.sort_unstable();
    assert_eq!(f, [0, 1, 2]);

    let far = [[Vec3::new(50.0, 0.0, 0.0), Vec3::new(51.0, 0.0, 0.0), Vec3::new(50.0, 1.0, 0.0)]];
    assert!(restrict(&t, &edges, &build_bvh(&far).unwrap()).faces.is_empty());
}

#[test]
fn bvh_restriction_equals_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for round in 0..4 {
        let pts: Vec<Vec3> = (0..200).map(|_| rand_vec(&mut rng, 5.0)).collect();
        let t = delaunay_3d(&pts).unwrap();
        let edges = dual_edges(&t);
        let soup = random_soup(&mut rng, 100 + 100 * round);
        let a = restrict(&t, &edges, &build_bvh(&soup).unwrap());
        let b = restrict_brute_force(&t, &edges, &soup);
        assert_eq!(a, b);
        assert!(!a.faces.is_empty());
        assert!(a.faces.len() <= t.interior_face_count());
        assert!(a.faces.iter().flatten().all(|&v| (v as usize) < pts.len()));
    }
}

#[test]
fn orientation_is_made_consistent() {
    // Octahedron with scrambled windings.
    let faces: Vec<Face> = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let scrambled: Vec<Face> = faces.iter().map(|f| if rng.random() { [f[0], f[2], f[1]] } else { *f }).collect();
    let out = orient_consistently(&scrambled);
    let mut directed = std::collections::HashSet::new();
    for f in &out {
        for k in 0..3 {
            assert!(directed.insert((f[k], f[(k + 1) % 3])), "edge traversed twice in the same direction");
        }
    }
    for (a, b) in out.iter().zip(&scrambled) {
        let mut x = *a;
        let mut y = *b;
        x.sort_unstable();
        y.sort_unstable();
        assert_eq!(x, y);
    }
}
