//! Midpoint subdivision of opacity-sampled faces.

use std::collections::HashMap;

use rand::Rng;

use super::config::TrainConfig;
use super::state::TrainState;
use crate::scene::{logit, sigmoid, triangle_opacity, Face, Scene};
use crate::sh::SH_COEFFS;

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Subdivision {
    pub new_vertices: usize,
    pub split_faces: usize,
    /// For each output face, the index of the face it came from.
    pub parents: Vec<u32>,
}

/// Splits every selected face into four through its edge midpoints. A
/// midpoint is created once per edge even when both faces sharing it are
/// split. New vertices average the SH coefficients and opacities of the edge
/// endpoints; children keep the parent's winding.
pub fn subdivide(scene: &mut Scene, selected: &[bool]) -> Subdivision {
    let mut mids: HashMap<(u32, u32), u32> = HashMap::new();
    let old_faces = std::mem::take(&mut scene.topology.faces);
    let mut faces = Vec::with_capacity(old_faces.len() + 3 * selected.iter().filter(|&&s| s).count());
    let mut parents = Vec::with_capacity(faces.capacity());
    let n0 = scene.num_vertices();
    let mut split = 0;
    for (fi, f) in old_faces.iter().enumerate() {
        if !selected[fi] {
            faces.push(*f);
            parents.push(fi as u32);
            continue;
        }
        split += 1;
        let mut m = [0u32; 3];
        for k in 0..3 {
            let (a, b) = (f[k], f[(k + 1) % 3]);
            m[k] = *mids.entry((a.min(b), a.max(b))).or_insert_with(|| midpoint(scene, a, b));
        }
        let [a, b, c] = *f;
        let children: [Face; 4] = [[a, m[0], m[2]], [m[0], b, m[1]], [m[2], m[1], c], [m[0], m[1], m[2]]];
        faces.extend_from_slice(&children);
        parents.extend([fi as u32; 4]);
    }
    scene.topology.faces = faces;
    Subdivision { new_vertices: scene.num_vertices() - n0, split_faces: split, parents }
}

fn midpoint(scene: &mut Scene, a: u32, b: u32) -> u32 {
    let vs = &mut scene.vertices;
    let (a, b) = (a as usize, b as usize);
    let pos = (vs.positions[a] + vs.positions[b]) * 0.5;
    let mut sh = [0.0; SH_COEFFS];
    for (k, v) in sh.iter_mut().enumerate() {
        *v = 0.5 * (vs.sh[a][k] + vs.sh[b][k]);
    }
    let o = 0.5 * (sigmoid(vs.opacity_logits[a]) + sigmoid(vs.opacity_logits[b]));
    let o = o.clamp(1e-12, 1.0 - 1e-12);
    vs.push(pos, sh, logit(o))
}

/// Bernoulli selection with probability equal to the face opacity, scaled
/// down when the expected growth would exceed `max_faces`; then subdivision.
pub fn densify(state: &mut TrainState, config: &TrainConfig, o_t: f64) -> Subdivision {
    let scene = &state.scene;
    let probs: Vec<f64> = scene
        .topology
        .faces
        .iter()
        .map(|f| triangle_opacity(&scene.vertices, f, o_t).clamp(0.0, 1.0))
        .collect();
    let room = config.max_faces.saturating_sub(scene.num_faces()) as f64;
    let expected = 3.0 * probs.iter().sum::<f64>();
    let scale = if expected > room { room / expected } else { 1.0 };
    let selected: Vec<bool> = probs.iter().map(|&p| state.rng.random::<f64>() < p * scale).collect();
    let sub = subdivide(&mut state.scene, &selected);
    state.adam.grow(state.scene.num_vertices());
    state.max_weight = sub.parents.iter().map(|&p| state.max_weight[p as usize]).collect();
    sub
}
