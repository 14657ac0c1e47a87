//! Adam over the per-vertex parameters, with moments that follow vertex edits.

use crate::geometry::Vec3;
use crate::scene::{SceneGradients, VertexSet};
use crate::sh::{ShCoeffs, SH_BASIS, SH_COEFFS};

/// Per-parameter learning rates of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearningRates {
    pub position: f64,
    pub opacity: f64,
    pub sh_dc: f64,
    pub sh_rest: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: SceneGradients,
    pub v: SceneGradients,
}

impl Adam {
    pub fn new(n: usize, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { beta1, beta2, eps, step: 0, m: SceneGradients::zeros(n), v: SceneGradients::zeros(n) }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    /// Appends zero moments for newly created vertices.
    pub fn grow(&mut self, n: usize) {
        for s in [&mut self.m, &mut self.v] {
            s.d_positions.resize(n, Vec3::zeros());
            s.d_sh.resize(n, [0.0; SH_COEFFS]);
            s.d_opacity_logits.resize(n, 0.0);
        }
    }

    /// Applies an old-to-new vertex index map as produced by vertex compaction.
    pub fn remap(&mut self, map: &[Option<u32>]) {
        for s in [&mut self.m, &mut self.v] {
            let keep = |i: usize| map[i].is_some();
            s.d_positions = s.d_positions.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, v)| *v).collect();
            s.d_sh = s.d_sh.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, v)| *v).collect();
            s.d_opacity_logits =
                s.d_opacity_logits.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, v)| *v).collect();
        }
    }

    pub fn update(&mut self, params: &mut VertexSet, grads: &SceneGradients, lr: &LearningRates) {
        self.step += 1;
        let (b1, b2, eps) = (self.beta1, self.beta2, self.eps);
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        let upd = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64, lr: f64| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let mh = *m / c1;
            let vh = *v / c2;
            *p -= lr * mh / (vh.sqrt() + eps);
        };
        for i in 0..params.len() {
            for k in 0..3 {
                upd(
                    &mut params.positions[i][k],
                    grads.d_positions[i][k],
                    &mut self.m.d_positions[i][k],
                    &mut self.v.d_positions[i][k],
                    lr.position,
                );
            }
            let sh: &mut ShCoeffs = &mut params.sh[i];
            for k in 0..SH_COEFFS {
                let rate = if k % SH_BASIS == 0 { lr.sh_dc } else { lr.sh_rest };
                upd(&mut sh[k], grads.d_sh[i][k], &mut self.m.d_sh[i][k], &mut self.v.d_sh[i][k], rate);
            }
            upd(
                &mut params.opacity_logits[i],
                grads.d_opacity_logits[i],
                &mut self.m.d_opacity_logits[i],
                &mut self.v.d_opacity_logits[i],
                lr.opacity,
            );
        }
    }
}
