//! Face removal by opacity, by blending weight and by final visibility.

use super::config::TrainConfig;
use super::state::TrainState;
use crate::error::Result;
use crate::geometry::CameraModel;
use crate::raster::{render, RenderSettings};
use crate::scene::triangle_opacity;

#[derive(Clone, Copy, Debug)]
pub enum PrunePhase<'a> {
    /// Faces whose opacity is below `hard_prune_threshold`.
    Hard,
    /// Faces whose maximum blending weight is below `max(O_t, weight_prune_threshold)`.
    Weight,
    /// Faces that contribute to no pixel of any of the cameras when rendered opaque.
    Final(&'a [&'a CameraModel], &'a RenderSettings),
}

/// Removes faces according to `phase` at opacity floor `o_t`, then orphaned
/// vertices. Returns the number of removed faces.
pub fn prune(state: &mut TrainState, config: &TrainConfig, phase: PrunePhase, o_t: f64) -> Result<usize> {
    let keep: Vec<bool> = match phase {
        PrunePhase::Hard => {
            let vs = &state.scene.vertices;
            state
                .scene
                .topology
                .faces
                .iter()
                .map(|f| triangle_opacity(vs, f, o_t) >= config.hard_prune_threshold)
                .collect()
        }
        PrunePhase::Weight => {
            let t = o_t.max(config.weight_prune_threshold);
            state.max_weight.iter().map(|&w| w >= t).collect()
        }
        PrunePhase::Final(cameras, settings) => {
            let mut seen = vec![false; state.scene.num_faces()];
            for cam in cameras {
                let out = render(&state.scene, cam, 1.0, settings)?;
                for (s, &w) in seen.iter_mut().zip(&out.max_weight) {
                    *s |= w > 0.0;
                }
            }
            seen
        }
    };
    Ok(state.retain_faces(&keep))
}
