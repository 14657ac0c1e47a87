//! Training hyperparameters with outdoor/indoor presets and TOML (de)serialisation.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Iteration count the default milestones are expressed against.
pub const BASE_ITERATIONS: u32 = 30_000;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    #[default]
    Outdoor,
    Indoor,
}

impl std::str::FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "outdoor" => Ok(Preset::Outdoor),
            "indoor" => Ok(Preset::Indoor),
            other => Err(Error::InvalidInput(format!("unknown preset `{other}` (expected outdoor or indoor)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub total_iterations: u32,
    pub mesh_creation_iteration: u32,
    pub hard_prune_iteration: u32,
    pub hard_prune_threshold: f64,
    pub weight_prune_start: u32,
    pub weight_prune_threshold: f64,
    pub densify_from: u32,
    pub densify_until: u32,
    pub densify_interval: u32,
    /// Upper bound on the face count reachable through densification.
    pub max_faces: usize,
    pub lr_position: f64,
    pub lr_opacity: f64,
    /// Learning rate of the DC color coefficients.
    pub lr_feature: f64,
    /// Learning rate of the higher-order SH coefficients, as a fraction of `lr_feature`.
    pub lr_feature_rest_factor: f64,
    /// Position learning rate multiplier applied from the mesh stage on.
    pub stage2_lr_factor: f64,
    pub beta_z: f64,
    pub beta_n: f64,
    pub beta_d: f64,
    pub beta_o: f64,
    pub ssim_lambda: f64,
    pub initial_opacity: f64,
    /// Initial triangle circumradius over the mean distance to the three nearest points.
    pub init_scale: f64,
    pub sigma_start: f64,
    pub sigma_end: f64,
    pub opacity_schedule_start: u32,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub supersample: u32,
    pub supersample_start: u32,
    pub background: [f64; 3],
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig::preset(Preset::Outdoor)
    }
}

impl TrainConfig {
    pub fn preset(preset: Preset) -> Self {
        let indoor = preset == Preset::Indoor;
        TrainConfig {
            seed: 0,
            total_iterations: BASE_ITERATIONS,
            mesh_creation_iteration: 11_000,
            hard_prune_iteration: 5_000,
            hard_prune_threshold: 0.2,
            weight_prune_start: if indoor { 3_000 } else { 4_000 },
            weight_prune_threshold: 0.235,
            densify_from: 500,
            densify_until: 10_000,
            densify_interval: 500,
            max_faces: 200_000,
            lr_position: 0.0015,
            lr_opacity: if indoor { 0.05 } else { 0.03 },
            lr_feature: if indoor { 0.004 } else { 0.0016 },
            lr_feature_rest_factor: 1.0 / 20.0,
            stage2_lr_factor: 0.5,
            beta_z: 0.00025,
            beta_n: 0.0001,
            beta_d: if indoor { 0.0 } else { 0.01 },
            beta_o: if indoor { 0.0 } else { 2e-6 },
            ssim_lambda: 0.2,
            initial_opacity: 0.28,
            init_scale: 0.5,
            sigma_start: 1.0,
            sigma_end: 1e-4,
            opacity_schedule_start: 5_000,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            supersample: 2,
            supersample_start: 27_000,
            background: [0.0; 3],
        }
    }

    /// Same schedule shape over `total` iterations: every milestone and
    /// interval is multiplied by `total / total_iterations` and rounded.
    pub fn scaled_to(&self, total: u32) -> Self {
        let f = total as f64 / self.total_iterations.max(1) as f64;
        let s = |v: u32| (v as f64 * f).round() as u32;
        TrainConfig {
            total_iterations: total,
            mesh_creation_iteration: s(self.mesh_creation_iteration),
            hard_prune_iteration: s(self.hard_prune_iteration),
            weight_prune_start: s(self.weight_prune_start),
            densify_from: s(self.densify_from),
            densify_until: s(self.densify_until),
            densify_interval: s(self.densify_interval).max(1),
            opacity_schedule_start: s(self.opacity_schedule_start),
            supersample_start: s(self.supersample_start),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let t = self.total_iterations;
        let milestones = [
            ("mesh_creation_iteration", self.mesh_creation_iteration),
            ("hard_prune_iteration", self.hard_prune_iteration),
            ("weight_prune_start", self.weight_prune_start),
            ("densify_from", self.densify_from),
            ("densify_until", self.densify_until),
            ("opacity_schedule_start", self.opacity_schedule_start),
            ("supersample_start", self.supersample_start),
        ];
        if let Some((name, v)) = milestones.iter().find(|(_, v)| *v > t) {
            return Err(Error::InvalidInput(format!("{name} = {v} exceeds total_iterations = {t}")));
        }
        let weights = [
            ("beta_z", self.beta_z),
            ("beta_n", self.beta_n),
            ("beta_d", self.beta_d),
            ("beta_o", self.beta_o),
            ("ssim_lambda", self.ssim_lambda),
            ("lr_position", self.lr_position),
            ("lr_opacity", self.lr_opacity),
            ("lr_feature", self.lr_feature),
            ("lr_feature_rest_factor", self.lr_feature_rest_factor),
            ("stage2_lr_factor", self.stage2_lr_factor),
        ];
        if let Some((name, v)) = weights.iter().find(|(_, v)| !(*v >= 0.0 && v.is_finite())) {
            return Err(Error::InvalidInput(format!("{name} must be a finite non-negative number, got {v}")));
        }
        if self.ssim_lambda > 1.0 {
            return Err(Error::InvalidInput("ssim_lambda must lie in [0, 1]".into()));
        }
        if self.densify_interval == 0 {
            return Err(Error::InvalidInput("densify_interval must be positive".into()));
        }
        if self.supersample == 0 {
            return Err(Error::InvalidInput("supersample must be at least 1".into()));
        }
        if !(self.initial_opacity > 0.0 && self.initial_opacity < 1.0) {
            return Err(Error::InvalidInput("initial_opacity must lie in (0, 1)".into()));
        }
        if !(self.sigma_start > 0.0 && self.sigma_end > 0.0) {
            return Err(Error::InvalidInput("sigma schedule endpoints must be positive".into()));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::InvalidInput("init_scale must be positive".into()));
        }
        let adam_ok = (0.0..1.0).contains(&self.adam_beta1) && (0.0..1.0).contains(&self.adam_beta2) && self.adam_eps > 0.0;
        if !adam_ok {
            return Err(Error::InvalidInput("Adam betas must lie in [0, 1) and eps must be positive".into()));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: TrainConfig = toml::from_str(text).map_err(|e| Error::InvalidInput(format!("config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainConfig::from_toml(&text).map_err(|e| Error::format(path, e.to_string()))
    }
}
