//! 3D Delaunay tetrahedralization (Bowyer–Watson) and its dual Voronoi edges.
//!
//! The convex hull is closed with "ghost" tetrahedra that share a single vertex
//! at infinity, so the result covers exactly the hull of the input. Ties in the
//! in-sphere test are broken by a symbolic perturbation ordered by point index,
//! which makes the output unique for any input, including cospherical grids.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::predicates::{insphere, orient3d};

const INF: u32 = u32::MAX;
const DEAD: u32 = u32::MAX - 1;

/// Circumcenters farther than this many scene diagonals from their tet's
/// centroid are considered unreliable.
pub const SLIVER_FACTOR: f64 = 10.0;

/// Triangle shared by one (hull) or two (interior) tetrahedra.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TetFace {
    /// Sorted vertex indices.
    pub vertices: [u32; 3],
    pub tets: (u32, Option<u32>),
}

impl TetFace {
    pub fn is_interior(&self) -> bool {
        self.tets.1.is_some()
    }
}

#[derive(Clone, Debug)]
pub struct Tetrahedralization {
    pub points: Vec<Vec3>,
    /// Positively oriented tetrahedra (indices into `points`).
    pub tets: Vec<[u32; 4]>,
    /// All triangular faces, sorted by vertex triple.
    pub faces: Vec<TetFace>,
}

impl Tetrahedralization {
    pub fn interior_face_count(&self) -> usize {
        self.faces.iter().filter(|f| f.is_interior()).count()
    }

    pub fn boundary_faces(&self) -> impl Iterator<Item = &TetFace> {
        self.faces.iter().filter(|f| !f.is_interior())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualEdge {
    /// Index into [`Tetrahedralization::faces`].
    pub face: usize,
    pub endpoints: [Vec3; 2],
}

struct Mesh<'a> {
    pts: &'a [Vec3],
    /// Original index of each point, used as the perturbation order.
    ids: &'a [u32],
    tets: Vec<[u32; 4]>,
    adj: Vec<[u32; 4]>,
    free: Vec<u32>,
}

impl<'a> Mesh<'a> {
    #[inline]
    fn p(&self, v: u32) -> &Vec3 {
        &self.pts[v as usize]
    }

    fn is_ghost(&self, t: u32) -> bool {
        self.tets[t as usize][3] == INF
    }

    fn alloc(&mut self, verts: [u32; 4]) -> u32 {
        if let Some(t) = self.free.pop() {
            self.tets[t as usize] = verts;
            self.adj[t as usize] = [DEAD; 4];
            t
        } else {
            self.tets.push(verts);
            self.adj.push([DEAD; 4]);
            (self.tets.len() - 1) as u32
        }
    }

    fn orient_replaced(&self, t: u32, i: usize, q: &Vec3) -> f64 {
        let v = self.tets[t as usize];
        let p = |k: usize| if k == i { q } else { self.p(v[k]) };
        orient3d(p(0), p(1), p(2), p(3))
    }

    /// In-sphere test of a finite tet with index-ordered symbolic perturbation.
    fn finite_conflict(&self, t: u32, q: u32) -> bool {
        let v = self.tets[t as usize];
        let qp = self.p(q);
        let s = insphere(self.p(v[0]), self.p(v[1]), self.p(v[2]), self.p(v[3]), qp);
        if s != 0.0 {
            return s > 0.0;
        }
        let mut order: [(u32, Option<usize>); 5] = [
            (self.ids[v[0] as usize], Some(0)),
            (self.ids[v[1] as usize], Some(1)),
            (self.ids[v[2] as usize], Some(2)),
            (self.ids[v[3] as usize], Some(3)),
            (self.ids[q as usize], None),
        ];
        order.sort_unstable_by(|a, b| b.0.cmp(&a.0));
        for (_, slot) in order {
            match slot {
                None => return false,
                Some(i) => {
                    let o = self.orient_replaced(t, i, qp);
                    if o != 0.0 {
                        return o > 0.0;
                    }
                }
            }
        }
        false
    }

    fn conflict(&self, t: u32, q: u32) -> bool {
        if !self.is_ghost(t) {
            return self.finite_conflict(t, q);
        }
        let v = self.tets[t as usize];
        let o = orient3d(self.p(v[0]), self.p(v[1]), self.p(v[2]), self.p(q));
        if o != 0.0 {
            return o > 0.0;
        }
        self.finite_conflict(self.adj[t as usize][3], q)
    }

    /// Visibility walk towards `q`; returns a tet in conflict with it.
    fn locate(&self, start: u32, q: u32, seed: &mut u64) -> Option<u32> {
        let qp = *self.p(q);
        let mut t = start;
        let limit = 4 * self.tets.len() + 16;
        for _ in 0..limit {
            if self.is_ghost(t) {
                return self.conflict(t, q).then_some(t);
            }
            *seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let off = (*seed >> 33) as usize;
            let mut next = None;
            for k in 0..4 {
                let i = (k + off) % 4;
                if self.orient_replaced(t, i, &qp) < 0.0 {
                    next = Some(self.adj[t as usize][i]);
                    break;
                }
            }
            match next {
                Some(n) => t = n,
                None => return self.conflict(t, q).then_some(t),
            }
        }
        None
    }

    fn insert(&mut self, q: u32, hint: u32, seed: &mut u64) -> Result<u32> {
        let seed_tet = match self.locate(hint, q, seed) {
            Some(t) => t,
            None => (0..self.tets.len() as u32)
                .find(|&t| self.tets[t as usize][0] != DEAD && self.conflict(t, q))
                .ok_or_else(|| Error::Delaunay("point location failed".into()))?,
        };

        let mut in_cavity: HashMap<u32, bool> = HashMap::new();
        in_cavity.insert(seed_tet, true);
        let mut stack = vec![seed_tet];
        let mut cavity = Vec::new();
        let mut boundary: Vec<(u32, usize)> = Vec::new();
        while let Some(t) = stack.pop() {
            cavity.push(t);
            for i in 0..4 {
                let n = self.adj[t as usize][i];
                let hit = match in_cavity.get(&n) {
                    Some(&c) => c,
                    None => {
                        let c = self.conflict(n, q);
                        in_cavity.insert(n, c);
                        if c {
                            stack.push(n);
                        }
                        c
                    }
                };
                if !hit {
                    boundary.push((t, i));
                }
            }
        }

        let qp = *self.p(q);
        let mut created = Vec::with_capacity(boundary.len());
        let mut edge_map: HashMap<(u32, u32), (u32, usize)> = HashMap::with_capacity(boundary.len() * 3);
        for &(t, i) in &boundary {
            let mut verts = self.tets[t as usize];
            let outside = self.adj[t as usize][i];
            verts[i] = q;
            if verts[3] != INF && self.orient_replaced(t, i, &qp) <= 0.0 {
                return Err(Error::Delaunay("cavity is not star-shaped".into()));
            }
            let back = self.adj[outside as usize]
                .iter()
                .position(|&x| x == t)
                .expect("outside neighbour links back");
            created.push((verts, i, outside, back));
        }
        for &t in &cavity {
            self.tets[t as usize] = [DEAD; 4];
            self.free.push(t);
        }
        let mut last = hint;
        for (verts, i, outside, back) in created {
            let nt = self.alloc(verts);
            if verts[3] != INF {
                last = nt;
            }
            self.adj[nt as usize][i] = outside;
            self.adj[outside as usize][back] = nt;
            for j in 0..4 {
                if j == i {
                    continue;
                }
                // Face opposite j contains q; key it by its two other vertices.
                let mut other = [0u32; 2];
                let mut k = 0;
                for (m, &v) in verts.iter().enumerate() {
                    if m != i && m != j {
                        other[k] = v;
                        k += 1;
                    }
                }
                let key = (other[0].min(other[1]), other[0].max(other[1]));
                if let Some((t2, j2)) = edge_map.remove(&key) {
                    self.adj[nt as usize][j] = t2;
                    self.adj[t2 as usize][j2] = nt;
                } else {
                    edge_map.insert(key, (nt, j));
                }
            }
        }
        if !edge_map.is_empty() {
            return Err(Error::Delaunay("cavity boundary is not closed".into()));
        }
        Ok(last)
    }
}

/// Interleaves the bits of quantised coordinates for a cache-friendly order.
fn morton_key(p: &Vec3, lo: &Vec3, scale: f64) -> u64 {
    fn spread(mut x: u64) -> u64 {
        x &= 0x1f_ffff;
        x = (x | x << 32) & 0x1f00000000ffff;
        x = (x | x << 16) & 0x1f0000ff0000ff;
        x = (x | x << 8) & 0x100f00f00f00f00f;
        x = (x | x << 4) & 0x10c30c30c30c30c3;
        x = (x | x << 2) & 0x1249249249249249;
        x
    }
    let q = |v: f64| ((v * scale).clamp(0.0, 2_097_151.0)) as u64;
    let d = p - lo;
    spread(q(d.x)) | spread(q(d.y)) << 1 | spread(q(d.z)) << 2
}

/// Delaunay tetrahedralization of `points`.
///
/// Exact duplicates are merged into their lowest-indexed copy; tetrahedra only
/// reference those representatives.
pub fn delaunay_3d(points: &[Vec3]) -> Result<Tetrahedralization> {
    if points.len() < 4 {
        return Err(Error::Delaunay(format!("need at least 4 points, got {}", points.len())));
    }
    if let Some(i) = points.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
        return Err(Error::Delaunay(format!("point {i} is not finite")));
    }

    let mut seen: HashMap<[u64; 3], u32> = HashMap::with_capacity(points.len());
    let mut ids: Vec<u32> = Vec::with_capacity(points.len());
    for (i, p) in points.iter().enumerate() {
        // +0.0 and -0.0 are the same position.
        let key = [p.x + 0.0, p.y + 0.0, p.z + 0.0].map(f64::to_bits);
        if let std::collections::hash_map::Entry::Vacant(e) = seen.entry(key) {
            e.insert(i as u32);
            ids.push(i as u32);
        }
    }
    let pts: Vec<Vec3> = ids.iter().map(|&i| points[i as usize]).collect();
    let n = pts.len();

    let first = 0usize;
    let second = (1..n).find(|&i| pts[i] != pts[first]);
    let third = second.and_then(|b| {
        let axis = pts[b] - pts[first];
        (0..n)
            .map(|i| (i, axis.cross(&(pts[i] - pts[first])).norm()))
            .filter(|&(_, d)| d > 0.0)
            .max_by(|x, y| x.1.total_cmp(&y.1).then(y.0.cmp(&x.0)))
            .map(|(i, _)| i)
    });
    let fourth = third.and_then(|c| {
        let b = second.unwrap();
        (0..n).find(|&i| orient3d(&pts[first], &pts[b], &pts[c], &pts[i]) != 0.0)
    });
    let (Some(b), Some(c), Some(d)) = (second, third, fourth) else {
        return Err(Error::Delaunay("all points are coplanar".into()));
    };
    let mut init = [first as u32, b as u32, c as u32, d as u32];
    if orient3d(&pts[first], &pts[b], &pts[c], &pts[d]) < 0.0 {
        init.swap(0, 1);
    }

    let mut mesh = Mesh { pts: &pts, ids: &ids, tets: Vec::new(), adj: Vec::new(), free: Vec::new() };
    let t0 = mesh.alloc(init);
    let [v0, v1, v2, v3] = init;
    // Face opposite vertex i, ordered so the apex completes a positive tet;
    // the ghost stores it reversed.
    let opposite = [[v1, v3, v2], [v0, v2, v3], [v0, v3, v1], [v0, v1, v2]];
    let mut ghosts = [0u32; 4];
    for (i, f) in opposite.iter().enumerate() {
        let g = mesh.alloc([f[0], f[2], f[1], INF]);
        mesh.adj[t0 as usize][i] = g;
        mesh.adj[g as usize][3] = t0;
        ghosts[i] = g;
    }
    let mut edge_map: HashMap<(u32, u32), (u32, usize)> = HashMap::new();
    for &g in &ghosts {
        let v = mesh.tets[g as usize];
        for j in 0..3 {
            let (a, b) = (v[(j + 1) % 3], v[(j + 2) % 3]);
            let key = (a.min(b), a.max(b));
            if let Some((g2, j2)) = edge_map.remove(&key) {
                mesh.adj[g as usize][j] = g2;
                mesh.adj[g2 as usize][j2] = g;
            } else {
                edge_map.insert(key, (g, j));
            }
        }
    }

    let mut lo = pts[0];
    let mut hi = pts[0];
    for p in &pts {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let extent = (hi - lo).max().max(f64::MIN_POSITIVE);
    let scale = 2_097_151.0 / extent;
    let mut order: Vec<u32> = (0..n as u32).filter(|i| !init.contains(i)).collect();
    order.sort_by_cached_key(|&i| (morton_key(&pts[i as usize], &lo, scale), i));

    let mut hint = t0;
    let mut seed = 0x9e37_79b9_7f4a_7c15u64;
    for q in order {
        hint = mesh.insert(q, hint, &mut seed)?;
    }

    let mut tets: Vec<[u32; 4]> = mesh
        .tets
        .iter()
        .filter(|t| t[0] != DEAD && t[3] != INF)
        .map(|t| t.map(|v| ids[v as usize]))
        .collect();
    tets.sort_unstable_by_key(|t| {
        let mut s = *t;
        s.sort_unstable();
        s
    });
    let faces = build_faces(&tets);
    Ok(Tetrahedralization { points: points.to_vec(), tets, faces })
}

fn build_faces(tets: &[[u32; 4]]) -> Vec<TetFace> {
    let mut map: HashMap<[u32; 3], (u32, Option<u32>)> = HashMap::with_capacity(tets.len() * 2);
    for (ti, t) in tets.iter().enumerate() {
        for i in 0..4 {
            let mut f = [t[(i + 1) % 4], t[(i + 2) % 4], t[(i + 3) % 4]];
            f.sort_unstable();
            map.entry(f)
                .and_modify(|e| e.1 = Some(ti as u32))
                .or_insert((ti as u32, None));
        }
    }
    let mut faces: Vec<TetFace> = map.into_iter().map(|(vertices, tets)| TetFace { vertices, tets }).collect();
    faces.sort_unstable_by_key(|f| f.vertices);
    faces
}

/// Center of the sphere through the four vertices, or `None` for flat tets.
pub fn circumcenter(tet: &[Vec3; 4]) -> Option<Vec3> {
    let a = tet[0];
    let b = tet[1] - a;
    let c = tet[2] - a;
    let d = tet[3] - a;
    let den = 2.0 * b.dot(&c.cross(&d));
    if den == 0.0 || !den.is_finite() {
        return None;
    }
    let num = c.cross(&d) * b.norm_squared() + d.cross(&b) * c.norm_squared() + b.cross(&c) * d.norm_squared();
    let x = a + num / den;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Dual Voronoi edges of all interior faces whose circumcenters are reliable.
pub fn dual_edges(t: &Tetrahedralization) -> Vec<DualEdge> {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in &t.points {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let limit = SLIVER_FACTOR * (hi - lo).norm();
    let centers: Vec<Option<Vec3>> = t
        .tets
        .par_iter()
        .map(|tet| {
            let p = tet.map(|v| t.points[v as usize]);
            let c = circumcenter(&p)?;
            let centroid = (p[0] + p[1] + p[2] + p[3]) / 4.0;
            ((c - centroid).norm() <= limit).then_some(c)
        })
        .collect();
    t.faces
        .par_iter()
        .enumerate()
        .filter_map(|(fi, f)| {
            let t2 = f.tets.1?;
            let a = centers[f.tets.0 as usize]?;
            let b = centers[t2 as usize]?;
            Some(DualEdge { face: fi, endpoints: [a, b] })
        })
        .collect()
}
