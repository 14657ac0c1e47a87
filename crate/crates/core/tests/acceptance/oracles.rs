//! Reference implementations used only by the acceptance checks.

use std::collections::BTreeSet;

use meshsplat::Vec3;
use num_rational::BigRational;
use num_traits::{Signed, Zero};

type Q = BigRational;

fn q(x: f64) -> Q {
    Q::from_float(x).expect("finite coordinate")
}

fn qv(p: &Vec3) -> [Q; 3] {
    [q(p.x), q(p.y), q(p.z)]
}

fn sub(a: &[Q; 3], b: &[Q; 3]) -> [Q; 3] {
    [&a[0] - &b[0], &a[1] - &b[1], &a[2] - &b[2]]
}

fn det3(m: &[[Q; 3]; 3]) -> Q {
    &m[0][0] * (&m[1][1] * &m[2][2] - &m[1][2] * &m[2][1]) - &m[0][1] * (&m[1][0] * &m[2][2] - &m[1][2] * &m[2][0])
        + &m[0][2] * (&m[1][0] * &m[2][1] - &m[1][1] * &m[2][0])
}

fn sign(v: &Q) -> i32 {
    if v.is_zero() {
        0
    } else if v.is_positive() {
        1
    } else {
        -1
    }
}

/// Sign of `det[b - a, c - a, d - a]`, filtered in f64 with an exact fallback.
pub fn orient(a: &Vec3, b: &Vec3, c: &Vec3, d: &Vec3) -> i32 {
    let (u, v, w) = (b - a, c - a, d - a);
    let det = u.dot(&v.cross(&w));
    let perm = u.x.abs() * ((v.y * w.z).abs() + (v.z * w.y).abs())
        + u.y.abs() * ((v.x * w.z).abs() + (v.z * w.x).abs())
        + u.z.abs() * ((v.x * w.y).abs() + (v.y * w.x).abs());
    if det.abs() > 1e-10 * perm {
        return det.signum() as i32;
    }
    let (a, b, c, d) = (qv(a), qv(b), qv(c), qv(d));
    sign(&det3(&[sub(&b, &a), sub(&c, &a), sub(&d, &a)]))
}

fn lifted_det_f64(t: [&Vec3; 4], e: &Vec3) -> (f64, f64) {
    let rows: Vec<[f64; 4]> = t
        .iter()
        .map(|p| {
            let d = *p - e;
            [d.x, d.y, d.z, d.norm_squared()]
        })
        .collect();
    let mut det = 0.0;
    let mut perm = 0.0;
    for (sgn, perm_idx) in permutations4() {
        let mut prod = 1.0;
        for (r, &c) in perm_idx.iter().enumerate() {
            prod *= rows[r][c];
        }
        det += sgn * prod;
        perm += prod.abs();
    }
    (det, perm)
}

fn permutations4() -> Vec<(f64, [usize; 4])> {
    let mut out = Vec::with_capacity(24);
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    let p = [a, b, c, d];
                    let distinct = (0..4).all(|i| (i + 1..4).all(|j| p[i] != p[j]));
                    if !distinct {
                        continue;
                    }
                    let inversions = (0..4).map(|i| (i + 1..4).filter(|&j| p[i] > p[j]).count()).sum::<usize>();
                    out.push((if inversions % 2 == 0 { 1.0 } else { -1.0 }, p));
                }
            }
        }
    }
    out
}

fn lifted_det_exact(t: [&[Q; 3]; 4], e: &[Q; 3]) -> Q {
    let rows: Vec<[Q; 4]> = t
        .iter()
        .map(|p| {
            let d = sub(p, e);
            let n = &d[0] * &d[0] + &d[1] * &d[1] + &d[2] * &d[2];
            [d[0].clone(), d[1].clone(), d[2].clone(), n]
        })
        .collect();
    let mut det = Q::zero();
    for (sgn, p) in permutations4() {
        let mut prod = rows[0][p[0]].clone();
        for r in 1..4 {
            prod *= &rows[r][p[r]];
        }
        if sgn > 0.0 {
            det += prod;
        } else {
            det -= prod;
        }
    }
    det
}

/// Whether `e` lies strictly inside the circumsphere of the tetrahedron.
///
/// The sign convention is calibrated against the centroid, which is always
/// strictly inside, so the result does not depend on the tetrahedron's orientation.
pub fn strictly_inside_circumsphere(t: [&Vec3; 4], e: &Vec3) -> bool {
    let centroid = (t[0] + t[1] + t[2] + t[3]) / 4.0;
    let (d, perm) = lifted_det_f64(t, e);
    let (dc, permc) = lifted_det_f64(t, &centroid);
    if d.abs() > 1e-9 * perm && dc.abs() > 1e-9 * permc {
        return d.signum() == dc.signum();
    }
    let tq = [qv(t[0]), qv(t[1]), qv(t[2]), qv(t[3])];
    let refs = [&tq[0], &tq[1], &tq[2], &tq[3]];
    let four = q(4.0);
    let cq = [0, 1, 2].map(|k| (&tq[0][k] + &tq[1][k] + &tq[2][k] + &tq[3][k]) / &four);
    let s = sign(&lifted_det_exact(refs, &qv(e)));
    let sc = sign(&lifted_det_exact(refs, &cq));
    assert_ne!(sc, 0, "centroid cannot be on the circumsphere");
    s == sc
}

/// Convex hull facets by gift wrapping, for points in general position.
/// Facets are returned as sorted index triples.
pub fn gift_wrap_hull(p: &[Vec3]) -> BTreeSet<[u32; 3]> {
    let n = p.len();
    let first = first_facet(p);
    let mut facets = BTreeSet::new();
    let mut seen_edges = BTreeSet::new();
    let mut stack = vec![(first[0], first[1], first[2])];
    while let Some((a, b, c)) = stack.pop() {
        let mut key = [a as u32, b as u32, c as u32];
        key.sort_unstable();
        if !facets.insert(key) {
            continue;
        }
        for (u, v) in [(a, b), (b, c), (c, a)] {
            if !seen_edges.insert((u, v)) {
                continue;
            }
            // The neighbouring facet traverses the edge as (v, u).
            let mut w = (0..n).find(|&k| k != u && k != v).unwrap();
            for k in 0..n {
                if k == u || k == v || k == w {
                    continue;
                }
                if orient(&p[v], &p[u], &p[w], &p[k]) > 0 {
                    w = k;
                }
            }
            stack.push((v, u, w));
        }
    }
    facets
}

fn first_facet(p: &[Vec3]) -> [usize; 3] {
    let n = p.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let signs: Vec<i32> = (0..n).filter(|&m| m != i && m != j && m != k).map(|m| orient(&p[i], &p[j], &p[k], &p[m])).collect();
                if signs.iter().all(|&s| s < 0) {
                    return [i, j, k];
                }
                if signs.iter().all(|&s| s > 0) {
                    return [i, k, j];
                }
            }
        }
    }
    panic!("no hull facet found");
}

/// Exact test of the closed segment `p0 p1` against the closed triangle.
/// Coplanar configurations count as misses.
pub fn segment_hits_triangle(p0: &Vec3, p1: &Vec3, t: &[Vec3; 3]) -> bool {
    let s0 = orient(&t[0], &t[1], &t[2], p0);
    let s1 = orient(&t[0], &t[1], &t[2], p1);
    if s0 == 0 && s1 == 0 {
        return false;
    }
    if s0 * s1 > 0 {
        return false;
    }
    let e = [orient(p0, p1, &t[0], &t[1]), orient(p0, p1, &t[1], &t[2]), orient(p0, p1, &t[2], &t[0])];
    let pos = e.iter().any(|&v| v > 0);
    let neg = e.iter().any(|&v| v < 0);
    !(pos && neg)
}

/// PSNR straight from its definition, summed per channel.
pub fn psnr(a: &[[f64; 3]], b: &[[f64; 3]]) -> f64 {
    let mut per_channel = [0.0f64; 3];
    for (x, y) in a.iter().zip(b) {
        for c in 0..3 {
            per_channel[c] += (x[c] - y[c]) * (x[c] - y[c]);
        }
    }
    let mse = (per_channel[0] + per_channel[1] + per_channel[2]) / (3 * a.len()) as f64;
    if mse == 0.0 {
        return 99.0;
    }
    (10.0 * (1.0 / mse).log10()).min(99.0)
}

/// SSIM with an explicit 11×11 Gaussian window (σ = 1.5), zero-padded borders.
pub fn ssim(a: &[[f64; 3]], b: &[[f64; 3]], w: usize, h: usize) -> f64 {
    let r = 5isize;
    let mut g = [[0.0f64; 11]; 11];
    let mut total_g = 0.0;
    for (i, row) in g.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            let dx = i as f64 - 5.0;
            let dy = j as f64 - 5.0;
            *v = (-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5)).exp();
            total_g += *v;
        }
    }
    let (c1, c2) = (0.01f64.powi(2), 0.03f64.powi(2));
    let mut sum = 0.0;
    for c in 0..3 {
        for y in 0..h as isize {
            for x in 0..w as isize {
                let mut m = [0.0f64; 5];
                for dy in -r..=r {
                    for dx in -r..=r {
                        let (px, py) = (x + dx, y + dy);
                        if px < 0 || py < 0 || px >= w as isize || py >= h as isize {
                            continue;
                        }
                        let wgt = g[(dx + r) as usize][(dy + r) as usize] / total_g;
                        let i = py as usize * w + px as usize;
                        let (u, v) = (a[i][c], b[i][c]);
                        m[0] += wgt * u;
                        m[1] += wgt * v;
                        m[2] += wgt * u * u;
                        m[3] += wgt * v * v;
                        m[4] += wgt * u * v;
                    }
                }
                let var_a = m[2] - m[0] * m[0];
                let var_b = m[3] - m[1] * m[1];
                let cov = m[4] - m[0] * m[1];
                sum += (2.0 * m[0] * m[1] + c1) * (2.0 * cov + c2) / ((m[0] * m[0] + m[1] * m[1] + c1) * (var_a + var_b + c2));
            }
        }
    }
    sum / (3 * w * h) as f64
}
