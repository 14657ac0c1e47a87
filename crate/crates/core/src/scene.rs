//! The learnable scene: a shared vertex store and the faces indexing into it.

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::sh::{self, ShCoeffs, SH_COEFFS};

pub type Face = [u32; 3];

/// Per-vertex parameters. All arrays have the same length.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct VertexSet {
    pub positions: Vec<Vec3>,
    pub sh: Vec<ShCoeffs>,
    pub opacity_logits: Vec<f64>,
}

impl VertexSet {
    pub fn with_capacity(n: usize) -> Self {
        VertexSet {
            positions: Vec::with_capacity(n),
            sh: Vec::with_capacity(n),
            opacity_logits: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn push(&mut self, position: Vec3, sh: ShCoeffs, opacity_logit: f64) -> u32 {
        self.positions.push(position);
        self.sh.push(sh);
        self.opacity_logits.push(opacity_logit);
        (self.positions.len() - 1) as u32
    }

    /// Keeps the vertices where `keep` is true; returns the old-to-new index map.
    pub fn retain_mask(&mut self, keep: &[bool]) -> Vec<Option<u32>> {
        let mut remap = vec![None; self.len()];
        let mut next = 0u32;
        for (i, &k) in keep.iter().enumerate() {
            if k {
                remap[i] = Some(next);
                next += 1;
            }
        }
        let mut idx = 0;
        self.positions.retain(|_| {
            idx += 1;
            keep[idx - 1]
        });
        idx = 0;
        self.sh.retain(|_| {
            idx += 1;
            keep[idx - 1]
        });
        idx = 0;
        self.opacity_logits.retain(|_| {
            idx += 1;
            keep[idx - 1]
        });
        remap
    }
}

/// Faces over a [`VertexSet`] plus the single window parameter shared by all of them.
#[derive(Clone, Debug, PartialEq)]
pub struct TriangleTopology {
    pub faces: Vec<Face>,
    pub shared_sigma: f64,
}

impl Default for TriangleTopology {
    fn default() -> Self {
        TriangleTopology { faces: Vec::new(), shared_sigma: 1.0 }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Scene {
    pub vertices: VertexSet,
    pub topology: TriangleTopology,
}

impl Scene {
    pub fn new(vertices: VertexSet, topology: TriangleTopology) -> Result<Self> {
        let scene = Scene { vertices, topology };
        scene.validate()?;
        Ok(scene)
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn num_faces(&self) -> usize {
        self.topology.faces.len()
    }

    pub fn validate(&self) -> Result<()> {
        let v = &self.vertices;
        let n = v.len();
        if v.sh.len() != n || v.opacity_logits.len() != n {
            return Err(Error::InvalidInput(format!(
                "vertex arrays disagree in length ({} positions, {} sh, {} opacities)",
                n,
                v.sh.len(),
                v.opacity_logits.len()
            )));
        }
        if let Some(i) = v.positions.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
            return Err(Error::InvalidInput(format!("vertex {i} has a non-finite position")));
        }
        if let Some(i) = v.sh.iter().position(|c| !c.iter().all(|x| x.is_finite())) {
            return Err(Error::InvalidInput(format!("vertex {i} has non-finite SH coefficients")));
        }
        if let Some(i) = v.opacity_logits.iter().position(|x| !x.is_finite()) {
            return Err(Error::InvalidInput(format!("vertex {i} has a non-finite opacity logit")));
        }
        let sigma = self.topology.shared_sigma;
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidInput(format!("shared sigma must be positive, got {sigma}")));
        }
        for (fi, f) in self.topology.faces.iter().enumerate() {
            if f.iter().any(|&i| i as usize >= n) {
                return Err(Error::InvalidInput(format!("face {fi} references a missing vertex")));
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidInput(format!("face {fi} repeats a vertex")));
            }
        }
        Ok(())
    }

    /// Drops vertices referenced by no face, remapping face indices.
    /// Returns the old-to-new map so callers can compact parallel state.
    pub fn compact_vertices(&mut self) -> Vec<Option<u32>> {
        let mut used = vec![false; self.vertices.len()];
        for f in &self.topology.faces {
            for &i in f {
                used[i as usize] = true;
            }
        }
        let remap = self.vertices.retain_mask(&used);
        for f in &mut self.topology.faces {
            for i in f.iter_mut() {
                *i = remap[*i as usize].expect("referenced vertex kept");
            }
        }
        remap
    }
}

/// Gradients with the same shapes as [`VertexSet`].
#[derive(Clone, Debug, PartialEq)]
pub struct SceneGradients {
    pub d_positions: Vec<Vec3>,
    pub d_sh: Vec<ShCoeffs>,
    pub d_opacity_logits: Vec<f64>,
}

impl SceneGradients {
    pub fn zeros(n: usize) -> Self {
        SceneGradients {
            d_positions: vec![Vec3::zeros(); n],
            d_sh: vec![[0.0; SH_COEFFS]; n],
            d_opacity_logits: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.d_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d_positions.is_empty()
    }

    pub fn add_assign(&mut self, other: &SceneGradients) {
        for (a, b) in self.d_positions.iter_mut().zip(&other.d_positions) {
            *a += b;
        }
        for (a, b) in self.d_sh.iter_mut().zip(&other.d_sh) {
            for (x, y) in a.iter_mut().zip(b.iter()) {
                *x += y;
            }
        }
        for (a, b) in self.d_opacity_logits.iter_mut().zip(&other.d_opacity_logits) {
            *a += b;
        }
    }

    pub fn scale(&mut self, s: f64) {
        self.d_positions.iter_mut().for_each(|p| *p *= s);
        self.d_sh.iter_mut().for_each(|c| c.iter_mut().for_each(|x| *x *= s));
        self.d_opacity_logits.iter_mut().for_each(|x| *x *= s);
    }

    pub fn is_zero(&self) -> bool {
        self.d_positions.iter().all(|p| p.iter().all(|&x| x == 0.0))
            && self.d_sh.iter().all(|c| c.iter().all(|&x| x == 0.0))
            && self.d_opacity_logits.iter().all(|&x| x == 0.0)
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// `o'(logit) = O_t + (1 - O_t)·sigm(logit)`.
#[inline]
pub fn reparam_opacity(logit: f64, o_t: f64) -> f64 {
    o_t + (1.0 - o_t) * sigmoid(logit)
}

/// `∂o'/∂logit`.
#[inline]
pub fn reparam_opacity_grad(logit: f64, o_t: f64) -> f64 {
    let s = sigmoid(logit);
    (1.0 - o_t) * s * (1.0 - s)
}

/// Triangle opacity: minimum reparameterized vertex opacity. Also returns the
/// vertex that attains it (lowest index on ties), which receives the gradient.
pub fn triangle_opacity_argmin(vs: &VertexSet, face: &Face, o_t: f64) -> (f64, u32) {
    let mut order = *face;
    order.sort_unstable();
    let mut best = (f64::INFINITY, order[0]);
    for &i in &order {
        let o = reparam_opacity(vs.opacity_logits[i as usize], o_t);
        if o < best.0 {
            best = (o, i);
        }
    }
    best
}

pub fn triangle_opacity(vs: &VertexSet, face: &Face, o_t: f64) -> f64 {
    triangle_opacity_argmin(vs, face, o_t).0
}

/// RGB of a vertex seen from `camera_center`.
pub fn vertex_color(vs: &VertexSet, vertex: usize, camera_center: &Vec3) -> [f64; 3] {
    let d = vs.positions[vertex] - camera_center;
    let dir = d.try_normalize(1e-300).unwrap_or_else(Vec3::z);
    sh::eval_sh_color(&vs.sh[vertex], &dir)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn vs_with_logits(logits: &[f64]) -> VertexSet {
        let mut vs = VertexSet::default();
        for (i, &l) in logits.iter().enumerate() {
            vs.push(Vec3::new(i as f64, 0.0, 0.0), [0.0; SH_COEFFS], l);
        }
        vs
    }

    #[test]
    fn opacity_examples() {
        let vs = vs_with_logits(&[0.0, 0.0, 0.0]);
        assert_eq!(triangle_opacity(&vs, &[0, 1, 2], 0.0), 0.5);
        let vs = vs_with_logits(&[-2.0, 0.0, 3.0]);
        assert_eq!(triangle_opacity(&vs, &[0, 1, 2], 1.0), 1.0);
        let expect = 0.5 + 0.5 * sigmoid(-2.0);
        assert!((triangle_opacity(&vs, &[0, 1, 2], 0.5) - expect).abs() < 1e-15);
        assert!((expect - 0.5596).abs() < 1e-4);
        assert_eq!(triangle_opacity_argmin(&vs, &[2, 1, 0], 0.5).1, 0);
    }

    #[test]
    fn argmin_tie_goes_to_lowest_index() {
        let vs = vs_with_logits(&[1.0, 1.0, 1.0]);
        assert_eq!(triangle_opacity_argmin(&vs, &[2, 0, 1], 0.0).1, 0);
    }

    #[test]
    fn reparam_derivative_matches_fd() {
        for &o_t in &[0.0, 0.3, 0.9] {
            for &l in &[-4.0, -0.5, 0.0, 2.0, 6.0] {
                let h = 1e-5;
                let fd = (reparam_opacity(l + h, o_t) - reparam_opacity(l - h, o_t)) / (2.0 * h);
                let an = reparam_opacity_grad(l, o_t);
                assert!((fd - an).abs() <= 1e-6 * an.abs().max(1e-12), "{fd} vs {an}");
            }
        }
    }

    proptest! {
        #[test]
        fn opacity_permutation_invariant(a in -6.0f64..6.0, b in -6.0f64..6.0, c in -6.0f64..6.0, o_t in 0.0f64..1.0) {
            let vs = vs_with_logits(&[a, b, c]);
            let base = triangle_opacity(&vs, &[0, 1, 2], o_t);
            for f in [[0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]] {
                prop_assert_eq!(triangle_opacity(&vs, &f, o_t), base);
            }
            prop_assert!(base >= o_t && base <= 1.0);
        }

        #[test]
        fn reparam_monotone(l in -8.0f64..8.0, dl in 0.001f64..2.0, o_t in 0.0f64..0.99, dot in 0.001f64..0.01) {
            prop_assert!(reparam_opacity(l + dl, o_t) > reparam_opacity(l, o_t));
            prop_assert!(reparam_opacity(l, o_t + dot) >= reparam_opacity(l, o_t));
        }
    }

    #[test]
    fn compaction_remaps_faces() {
        let mut vs = vs_with_logits(&[0.0; 6]);
        vs.positions[5] = Vec3::new(9.0, 9.0, 9.0);
        let mut scene = Scene::new(vs, TriangleTopology { faces: vec![[1, 3, 5]], shared_sigma: 1.0 }).unwrap();
        let remap = scene.compact_vertices();
        assert_eq!(scene.num_vertices(), 3);
        assert_eq!(scene.topology.faces, vec![[0, 1, 2]]);
        assert_eq!(scene.vertices.positions[2], Vec3::new(9.0, 9.0, 9.0));
        assert_eq!(remap[5], Some(2));
        assert_eq!(remap[0], None);
    }

    #[test]
    fn compaction_without_orphans_is_identity() {
        let vs = vs_with_logits(&[0.1, 0.2, 0.3, 0.4]);
        let scene = Scene::new(vs, TriangleTopology { faces: vec![[0, 1, 2], [2, 1, 3]], shared_sigma: 0.4 }).unwrap();
        let mut copy = scene.clone();
        copy.compact_vertices();
        assert_eq!(copy, scene);
    }

    #[test]
    fn validation_catches_bad_faces() {
        let vs = vs_with_logits(&[0.0; 3]);
        assert!(Scene::new(vs.clone(), TriangleTopology { faces: vec![[0, 1, 3]], shared_sigma: 1.0 }).is_err());
        assert!(Scene::new(vs.clone(), TriangleTopology { faces: vec![[0, 1, 1]], shared_sigma: 1.0 }).is_err());
        assert!(Scene::new(vs, TriangleTopology { faces: vec![], shared_sigma: 0.0 }).is_err());
    }

    #[test]
    fn vertex_color_dc_only() {
        let mut vs = vs_with_logits(&[0.0]);
        vs.sh[0][0] = sh::rgb_to_dc(0.8);
        let c = vertex_color(&vs, 0, &Vec3::new(0.0, 0.0, -5.0));
        assert!((c[0] - 0.8).abs() < 1e-12 && (c[1] - 0.5).abs() < 1e-12);
    }
}
