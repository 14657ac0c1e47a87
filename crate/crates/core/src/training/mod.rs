//! Two-stage optimisation: a triangle soup trained with densification and
//! pruning, then converted to a restricted Delaunay mesh and refined.

pub mod adam;
pub mod config;
pub mod densify;
pub mod loss;
pub mod prune;
pub mod schedule;
pub mod state;
pub mod train;

pub use adam::{Adam, LearningRates};
pub use config::{Preset, TrainConfig, BASE_ITERATIONS};
pub use loss::{compute_loss, depth_align_loss, opacity_loss, LossTerms, LossWeights};
pub use schedule::{opacity_schedule, sigma_schedule};
pub use densify::{densify, subdivide, Subdivision};
pub use prune::{prune, PrunePhase};
pub use state::{init_soup, Stage, TrainState};
pub use train::{create_mesh, evaluate, train, write_log_csv, Evaluation, LogRow, MeshCreation, Trainer};
