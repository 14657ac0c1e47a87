//! Restricted Delaunay meshing: keep the Delaunay faces whose dual Voronoi
//! edge crosses the optimised triangle soup.

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;

use crate::delaunay::{DualEdge, Tetrahedralization};
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::Face;

/// Inclusive tolerance on barycentric coordinates in the segment test.
pub const SEGMENT_EPS: f64 = 1e-9;

pub const MAX_LEAF_SIZE: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn empty() -> Self {
        Aabb { min: Vec3::repeat(f64::INFINITY), max: Vec3::repeat(f64::NEG_INFINITY) }
    }

    pub fn of_triangle(t: &[Vec3; 3]) -> Self {
        Aabb { min: t[0].inf(&t[1]).inf(&t[2]), max: t[0].sup(&t[1]).sup(&t[2]) }
    }

    pub fn union(&self, o: &Aabb) -> Self {
        Aabb { min: self.min.inf(&o.min), max: self.max.sup(&o.max) }
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn contains(&self, o: &Aabb) -> bool {
        (0..3).all(|a| self.min[a] <= o.min[a] && o.max[a] <= self.max[a])
    }

    /// Slab test against the closed segment `p0 + t (p1 - p0)`, `t ∈ [0, 1]`.
    pub fn intersects_segment(&self, p0: &Vec3, p1: &Vec3) -> bool {
        let d = p1 - p0;
        let (mut t0, mut t1) = (0.0f64, 1.0f64);
        for a in 0..3 {
            if d[a] == 0.0 {
                if p0[a] < self.min[a] || p0[a] > self.max[a] {
                    return false;
                }
                continue;
            }
            let inv = 1.0 / d[a];
            let mut ta = (self.min[a] - p0[a]) * inv;
            let mut tb = (self.max[a] - p0[a]) * inv;
            if ta > tb {
                std::mem::swap(&mut ta, &mut tb);
            }
            t0 = t0.max(ta);
            t1 = t1.min(tb);
            if t0 > t1 {
                return false;
            }
        }
        true
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum BvhNode {
    Inner { bounds: Aabb, left: u32, right: u32 },
    Leaf { bounds: Aabb, first: u32, count: u32 },
}

impl BvhNode {
    pub fn bounds(&self) -> &Aabb {
        match self {
            BvhNode::Inner { bounds, .. } | BvhNode::Leaf { bounds, .. } => bounds,
        }
    }
}

/// Binary bounding volume hierarchy over a triangle soup. Node 0 is the root.
#[derive(Clone, Debug)]
pub struct Bvh {
    pub nodes: Vec<BvhNode>,
    /// Triangle indices referenced by leaves.
    pub indices: Vec<u32>,
    pub triangles: Vec<[Vec3; 3]>,
}

/// Builds a BVH by median split along the longest axis of the centroid bounds.
pub fn build_bvh(triangles: &[[Vec3; 3]]) -> Result<Bvh> {
    if triangles.is_empty() {
        return Err(Error::InvalidInput("cannot build a BVH over an empty soup".into()));
    }
    let boxes: Vec<Aabb> = triangles.iter().map(Aabb::of_triangle).collect();
    let centroids: Vec<Vec3> = triangles.iter().map(|t| (t[0] + t[1] + t[2]) / 3.0).collect();
    let mut indices: Vec<u32> = (0..triangles.len() as u32).collect();
    let mut nodes = Vec::with_capacity(2 * triangles.len() / MAX_LEAF_SIZE + 1);
    build_node(&mut nodes, &mut indices, 0, &boxes, &centroids);
    Ok(Bvh { nodes, indices, triangles: triangles.to_vec() })
}

fn build_node(nodes: &mut Vec<BvhNode>, idx: &mut [u32], first: u32, boxes: &[Aabb], centroids: &[Vec3]) -> u32 {
    let bounds = idx.iter().fold(Aabb::empty(), |b, &i| b.union(&boxes[i as usize]));
    let me = nodes.len() as u32;
    if idx.len() <= MAX_LEAF_SIZE {
        nodes.push(BvhNode::Leaf { bounds, first, count: idx.len() as u32 });
        return me;
    }
    let mut cb = Aabb::empty();
    for &i in idx.iter() {
        cb.grow(&centroids[i as usize]);
    }
    let ext = cb.max - cb.min;
    let axis = if ext.x >= ext.y && ext.x >= ext.z {
        0
    } else if ext.y >= ext.z {
        1
    } else {
        2
    };
    idx.sort_by(|&a, &b| centroids[a as usize][axis].total_cmp(&centroids[b as usize][axis]).then(a.cmp(&b)));
    let mid = idx.len() / 2;
    nodes.push(BvhNode::Leaf { bounds, first, count: 0 });
    let (l, r) = idx.split_at_mut(mid);
    let left = build_node(nodes, l, first, boxes, centroids);
    let right = build_node(nodes, r, first + mid as u32, boxes, centroids);
    nodes[me as usize] = BvhNode::Inner { bounds, left, right };
    me
}

impl Bvh {
    pub fn depth(&self) -> usize {
        fn rec(b: &Bvh, n: u32) -> usize {
            match b.nodes[n as usize] {
                BvhNode::Leaf { .. } => 0,
                BvhNode::Inner { left, right, .. } => 1 + rec(b, left).max(rec(b, right)),
            }
        }
        rec(self, 0)
    }

    /// Whether the closed segment hits any triangle of the soup.
    pub fn segment_hits_any(&self, p0: &Vec3, p1: &Vec3) -> bool {
        let mut stack = vec![0u32];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if !node.bounds().intersects_segment(p0, p1) {
                continue;
            }
            match *node {
                BvhNode::Leaf { first, count, .. } => {
                    let hit = self.indices[first as usize..(first + count) as usize]
                        .iter()
                        .any(|&i| segment_intersects_triangle(p0, p1, &self.triangles[i as usize]));
                    if hit {
                        return true;
                    }
                }
                BvhNode::Inner { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        false
    }
}

/// Möller–Trumbore test of the closed segment `p0 p1` against a closed triangle.
/// Segments parallel to the triangle plane and degenerate triangles never hit.
pub fn segment_intersects_triangle(p0: &Vec3, p1: &Vec3, tri: &[Vec3; 3]) -> bool {
    let d = p1 - p0;
    let e1 = tri[1] - tri[0];
    let e2 = tri[2] - tri[0];
    let scale = e1.norm() * e2.norm();
    if e1.cross(&e2).norm() <= 1e-14 * scale || scale == 0.0 {
        return false;
    }
    let h = d.cross(&e2);
    let det = e1.dot(&h);
    if det.abs() <= 1e-14 * scale * d.norm() {
        return false;
    }
    let inv = 1.0 / det;
    let s = p0 - tri[0];
    let u = s.dot(&h) * inv;
    if u < -SEGMENT_EPS || u > 1.0 + SEGMENT_EPS {
        return false;
    }
    let qv = s.cross(&e1);
    let v = d.dot(&qv) * inv;
    if v < -SEGMENT_EPS || u + v > 1.0 + SEGMENT_EPS {
        return false;
    }
    let t = e2.dot(&qv) * inv;
    (0.0..=1.0).contains(&t)
}

/// Delaunay faces selected by the soup; vertex indices refer to the original vertex set.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RestrictedMesh {
    pub faces: Vec<Face>,
}

/// Selects every Delaunay face whose dual edge intersects the soup, then
/// orients the result consistently where the surface allows it.
pub fn restrict(t: &Tetrahedralization, edges: &[DualEdge], bvh: &Bvh) -> RestrictedMesh {
    let selected: Vec<Face> = edges
        .par_iter()
        .filter(|e| bvh.segment_hits_any(&e.endpoints[0], &e.endpoints[1]))
        .map(|e| t.faces[e.face].vertices)
        .collect();
    finish(selected)
}

/// Reference implementation testing every edge against every soup triangle.
pub fn restrict_brute_force(t: &Tetrahedralization, edges: &[DualEdge], soup: &[[Vec3; 3]]) -> RestrictedMesh {
    let selected = edges
        .iter()
        .filter(|e| soup.iter().any(|tri| segment_intersects_triangle(&e.endpoints[0], &e.endpoints[1], tri)))
        .map(|e| t.faces[e.face].vertices)
        .collect();
    finish(selected)
}

fn finish(mut faces: Vec<Face>) -> RestrictedMesh {
    faces.sort_unstable();
    faces.dedup();
    RestrictedMesh { faces: orient_consistently(&faces) }
}

/// Re-winds faces by breadth-first search over shared edges so neighbours
/// traverse their common edge in opposite directions. Edges shared by more
/// than two faces do not propagate orientation.
pub fn orient_consistently(faces: &[Face]) -> Vec<Face> {
    let mut by_edge: HashMap<(u32, u32), Vec<u32>> = HashMap::with_capacity(faces.len() * 3 / 2);
    for (fi, f) in faces.iter().enumerate() {
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            by_edge.entry((a.min(b), a.max(b))).or_default().push(fi as u32);
        }
    }
    let mut out = faces.to_vec();
    let mut done = vec![false; faces.len()];
    let mut queue = VecDeque::new();
    for start in 0..faces.len() {
        if done[start] {
            continue;
        }
        done[start] = true;
        queue.push_back(start as u32);
        while let Some(fi) = queue.pop_front() {
            let f = out[fi as usize];
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let users = &by_edge[&(a.min(b), a.max(b))];
                if users.len() != 2 {
                    continue;
                }
                let g = if users[0] == fi { users[1] } else { users[0] };
                if done[g as usize] {
                    continue;
                }
                let gf = out[g as usize];
                let same_direction = (0..3).any(|m| gf[m] == a && gf[(m + 1) % 3] == b);
                if same_direction {
                    out[g as usize] = [gf[0], gf[2], gf[1]];
                }
                done[g as usize] = true;
                queue.push_back(g);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests;
