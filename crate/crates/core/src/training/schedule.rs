//! Window sharpness and opacity floor as functions of the iteration.

use super::config::TrainConfig;

/// σ, linear from `sigma_start` at 0 to `sigma_end` at `total_iterations`.
pub fn sigma_schedule(iter: u32, config: &TrainConfig) -> f64 {
    let total = config.total_iterations;
    if total == 0 {
        return config.sigma_start;
    }
    let f = (iter.min(total) as f64) / total as f64;
    config.sigma_start * (1.0 - f) + config.sigma_end * f
}

/// O_t: 0 before `opacity_schedule_start`, then linear up to 1 at `total_iterations`.
pub fn opacity_schedule(iter: u32, config: &TrainConfig) -> f64 {
    let start = config.opacity_schedule_start;
    let total = config.total_iterations;
    if iter < start {
        return 0.0;
    }
    if iter >= total {
        return 1.0;
    }
    (iter - start) as f64 / (total - start) as f64
}
