//! Optimiser state and its initialisation from SfM points.

use std::f64::consts::PI;

use nalgebra::{Quaternion, UnitQuaternion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::adam::Adam;
use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::io::SfmPoint;
use crate::scene::{logit, Scene, TriangleTopology, VertexSet};
use crate::sh::{rgb_to_dc, SH_BASIS, SH_COEFFS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage {
    /// Independent triangles with densification and pruning.
    Soup,
    /// Restricted Delaunay mesh with fixed connectivity.
    Mesh,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainState {
    pub scene: Scene,
    pub adam: Adam,
    /// Completed iterations.
    pub iteration: u32,
    pub stage: Stage,
    /// Per-face maximum blending weight since the last reset.
    pub max_weight: Vec<f64>,
    pub rng: ChaCha8Rng,
    /// Training-view visiting order of the current epoch and the position in it.
    pub view_order: Vec<u32>,
    pub view_cursor: u32,
    pub finalized: bool,
}

impl TrainState {
    pub fn new(scene: Scene, config: &TrainConfig) -> Self {
        let n = scene.num_vertices();
        let m = scene.num_faces();
        TrainState {
            scene,
            adam: Adam::new(n, config.adam_beta1, config.adam_beta2, config.adam_eps),
            iteration: 0,
            stage: Stage::Soup,
            max_weight: vec![0.0; m],
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            view_order: Vec::new(),
            view_cursor: 0,
            finalized: false,
        }
    }

    /// Removes faces where `keep` is false, then vertices no face references,
    /// keeping the optimiser moments and weights aligned. Returns the number of removed faces.
    pub fn retain_faces(&mut self, keep: &[bool]) -> usize {
        let before = self.scene.num_faces();
        let mut k = 0;
        self.scene.topology.faces.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        k = 0;
        self.max_weight.retain(|_| {
            k += 1;
            keep[k - 1]
        });
        let remap = self.scene.compact_vertices();
        if remap.iter().any(|r| r.is_none()) {
            self.adam.remap(&remap);
        }
        before - self.scene.num_faces()
    }
}

/// Mean distance from each point to its three nearest other points.
pub fn mean_three_nn_distance(points: &[Vec3]) -> Vec<f64> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let mut best = [f64::INFINITY; 3];
            for (j, q) in points.iter().enumerate() {
                if i == j {
                    continue;
                }
                let d = (p - q).norm_squared();
                if d < best[2] {
                    best[2] = d;
                    best.sort_by(f64::total_cmp);
                }
            }
            best.iter().map(|d| d.sqrt()).sum::<f64>() / 3.0
        })
        .collect()
}

/// Uniformly distributed rotation from three uniform samples.
fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    let (u1, u2, u3): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
    let a = (1.0 - u1).sqrt();
    let b = u1.sqrt();
    let q = Quaternion::new(b * (2.0 * PI * u3).cos(), a * (2.0 * PI * u2).sin(), a * (2.0 * PI * u2).cos(), b * (2.0 * PI * u3).sin());
    UnitQuaternion::from_quaternion(q)
}

/// One randomly oriented equilateral triangle per point, centered on it, with
/// circumradius `init_scale` times the mean distance to its three nearest
/// neighbours. Colors go to the DC coefficients, opacities to `initial_opacity`.
pub fn init_soup(points: &[SfmPoint], config: &TrainConfig) -> Result<TrainState> {
    config.validate()?;
    if points.len() < 4 {
        return Err(Error::InvalidInput(format!("need at least 4 SfM points, got {}", points.len())));
    }
    let pos: Vec<Vec3> = points.iter().map(|p| p.position).collect();
    let nn = mean_three_nn_distance(&pos);
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for p in &pos {
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    let floor = 1e-6 * (hi - lo).norm().max(1e-12);
    let mut state = TrainState::new(Scene::default(), config);
    let opacity = logit(config.initial_opacity);
    let mut vs = VertexSet::with_capacity(3 * points.len());
    let mut faces = Vec::with_capacity(points.len());
    for (p, d) in points.iter().zip(&nn) {
        let r = (config.init_scale * d).max(floor);
        let rot = random_rotation(&mut state.rng);
        let mut sh = [0.0; SH_COEFFS];
        for c in 0..3 {
            sh[c * SH_BASIS] = rgb_to_dc(p.color[c]);
        }
        let base = vs.len() as u32;
        for k in 0..3 {
            let t = 2.0 * PI * k as f64 / 3.0;
            vs.push(p.position + rot * Vec3::new(r * t.cos(), r * t.sin(), 0.0), sh, opacity);
        }
        faces.push([base, base + 1, base + 2]);
    }
    let scene = Scene::new(vs, TriangleTopology { faces, shared_sigma: config.sigma_start })?;
    let rng = state.rng.clone();
    state = TrainState::new(scene, config);
    state.rng = rng;
    Ok(state)
}
