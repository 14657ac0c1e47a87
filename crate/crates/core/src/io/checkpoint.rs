//! Binary training checkpoints.
//!
//! Layout (little-endian): magic `MSPLCKPT`, `u32` version, then the payload,
//! then an FNV-1a 64-bit hash of the payload. The payload holds, in order:
//! config (TOML string), iteration `u32`, stage `u8` (0 soup, 1 mesh),
//! finalized `u8`, vertex count N `u64`, N×3 positions, N×48 SH coefficients,
//! N opacity logits, face count M `u64`, M×3 `u32` faces, shared sigma,
//! M max blending weights, Adam β₁ β₂ ε and step `u64` followed by first and
//! second moments shaped like the vertex parameters, the RNG seed (32 bytes),
//! stream `u64` and word position `u128`, and the view order (`u32` length,
//! entries) and cursor `u32`. Floats are stored as `f64` bit patterns.

use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::error::{Error, Result};
use crate::geometry::Vec3;
use crate::scene::{Scene, SceneGradients, TriangleTopology, VertexSet};
use crate::sh::SH_COEFFS;
use crate::training::{Adam, Stage, TrainConfig, TrainState};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"MSPLCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

fn fnv1a(data: &[u8]) -> u64 {
    data.iter().fold(0xcbf2_9ce4_8422_2325u64, |h, &b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

#[derive(Default)]
struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: u32) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_bits().to_le_bytes());
    }
    fn vec3s(&mut self, v: &[Vec3]) {
        v.iter().for_each(|p| p.iter().for_each(|&x| self.f64(x)));
    }
    fn grads(&mut self, g: &SceneGradients) {
        self.vec3s(&g.d_positions);
        g.d_sh.iter().for_each(|c| c.iter().for_each(|&x| self.f64(x)));
        g.d_opacity_logits.iter().for_each(|&x| self.f64(x));
    }
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.data.len());
        let end = end.ok_or_else(|| Error::Checkpoint("file is truncated".into()))?;
        let s = &self.data[self.pos..end];
        self.pos = end;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_bits(self.u64()?))
    }
    fn len(&mut self, per_item: usize) -> Result<usize> {
        let n = self.u64()? as usize;
        if n.checked_mul(per_item).is_none_or(|b| b > self.data.len() - self.pos) {
            return Err(Error::Checkpoint("file is truncated".into()));
        }
        Ok(n)
    }
    fn vec3s(&mut self, n: usize) -> Result<Vec<Vec3>> {
        (0..n).map(|_| Ok(Vec3::new(self.f64()?, self.f64()?, self.f64()?))).collect()
    }
    fn grads(&mut self, n: usize) -> Result<SceneGradients> {
        let d_positions = self.vec3s(n)?;
        let mut d_sh = vec![[0.0; SH_COEFFS]; n];
        for c in &mut d_sh {
            for x in c.iter_mut() {
                *x = self.f64()?;
            }
        }
        let d_opacity_logits = (0..n).map(|_| self.f64()).collect::<Result<_>>()?;
        Ok(SceneGradients { d_positions, d_sh, d_opacity_logits })
    }
}

pub fn encode_checkpoint(state: &TrainState, config: &TrainConfig) -> Vec<u8> {
    let mut w = Writer::default();
    let toml = config.to_toml();
    w.u64(toml.len() as u64);
    w.0.extend_from_slice(toml.as_bytes());
    w.u32(state.iteration);
    w.u8(match state.stage {
        Stage::Soup => 0,
        Stage::Mesh => 1,
    });
    w.u8(state.finalized as u8);
    let vs = &state.scene.vertices;
    w.u64(vs.len() as u64);
    w.vec3s(&vs.positions);
    vs.sh.iter().for_each(|c| c.iter().for_each(|&x| w.f64(x)));
    vs.opacity_logits.iter().for_each(|&x| w.f64(x));
    let faces = &state.scene.topology.faces;
    w.u64(faces.len() as u64);
    faces.iter().for_each(|f| f.iter().for_each(|&i| w.u32(i)));
    w.f64(state.scene.topology.shared_sigma);
    state.max_weight.iter().for_each(|&x| w.f64(x));
    let a = &state.adam;
    w.f64(a.beta1);
    w.f64(a.beta2);
    w.f64(a.eps);
    w.u64(a.step);
    w.grads(&a.m);
    w.grads(&a.v);
    w.0.extend_from_slice(&state.rng.get_seed());
    w.u64(state.rng.get_stream());
    w.0.extend_from_slice(&state.rng.get_word_pos().to_le_bytes());
    w.u32(state.view_order.len() as u32);
    state.view_order.iter().for_each(|&v| w.u32(v));
    w.u32(state.view_cursor);

    let mut out = Vec::with_capacity(w.0.len() + 20);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&w.0);
    out.extend_from_slice(&fnv1a(&w.0).to_le_bytes());
    out
}

pub fn decode_checkpoint(data: &[u8]) -> Result<(TrainState, TrainConfig)> {
    if data.len() < 12 || &data[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
    }
    let version = u32::from_le_bytes(data[8..12].try_into().unwrap());
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported checkpoint version {version} (this build reads version {CHECKPOINT_VERSION})"
        )));
    }
    if data.len() < 20 {
        return Err(Error::Checkpoint("file is truncated".into()));
    }
    let (payload, hash) = data[12..].split_at(data.len() - 20);
    if fnv1a(payload) != u64::from_le_bytes(hash.try_into().unwrap()) {
        return Err(Error::Checkpoint("checksum mismatch (file is truncated or corrupt)".into()));
    }
    let mut r = Reader { data: payload, pos: 0 };
    let n = r.len(1)?;
    let toml = std::str::from_utf8(r.take(n)?).map_err(|_| Error::Checkpoint("config is not UTF-8".into()))?;
    let config = TrainConfig::from_toml(toml).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let iteration = r.u32()?;
    let stage = match r.u8()? {
        0 => Stage::Soup,
        1 => Stage::Mesh,
        s => return Err(Error::Checkpoint(format!("unknown stage tag {s}"))),
    };
    let finalized = r.u8()? != 0;
    let n = r.len(8 * (3 + SH_COEFFS + 1))?;
    let mut vs = VertexSet { positions: r.vec3s(n)?, ..Default::default() };
    vs.sh = vec![[0.0; SH_COEFFS]; n];
    for c in &mut vs.sh {
        for x in c.iter_mut() {
            *x = r.f64()?;
        }
    }
    vs.opacity_logits = (0..n).map(|_| r.f64()).collect::<Result<_>>()?;
    let m = r.len(12)?;
    let faces = (0..m).map(|_| Ok([r.u32()?, r.u32()?, r.u32()?])).collect::<Result<Vec<_>>>()?;
    let shared_sigma = r.f64()?;
    let scene = Scene::new(vs, TriangleTopology { faces, shared_sigma }).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let max_weight = (0..m).map(|_| r.f64()).collect::<Result<_>>()?;
    let (beta1, beta2, eps, step) = (r.f64()?, r.f64()?, r.f64()?, r.u64()?);
    let adam = Adam { beta1, beta2, eps, step, m: r.grads(n)?, v: r.grads(n)? };
    let seed: [u8; 32] = r.take(32)?.try_into().unwrap();
    let stream = r.u64()?;
    let word_pos = u128::from_le_bytes(r.take(16)?.try_into().unwrap());
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(stream);
    rng.set_word_pos(word_pos);
    let k = r.u32()? as usize;
    let view_order = (0..k).map(|_| r.u32()).collect::<Result<_>>()?;
    let view_cursor = r.u32()?;
    if r.pos != payload.len() {
        return Err(Error::Checkpoint("trailing bytes after payload".into()));
    }
    let state = TrainState { scene, adam, iteration, stage, max_weight, rng, view_order, view_cursor, finalized };
    Ok((state, config))
}

pub fn save_checkpoint(state: &TrainState, config: &TrainConfig, path: &Path) -> Result<()> {
    fs::write(path, encode_checkpoint(state, config)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(TrainState, TrainConfig)> {
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&data).map_err(|e| Error::format(path, e.to_string()))
}
