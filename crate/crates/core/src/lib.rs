//! Differentiable triangle-soup rendering, restricted Delaunay meshing and
//! the optimisation loop that ties them together.

pub mod analysis;
pub mod error;
pub mod delaunay;
pub mod geometry;
pub mod io;
pub mod metrics;
pub mod predicates;
pub mod raster;
pub mod restriction;
pub mod scene;
pub mod sh;
pub mod synth;
pub mod training;

pub use error::{Error, Result};
pub use geometry::{CameraModel, ScreenTriangle, Vec2, Vec3};
pub use raster::{render, render_backward, PixelGrads, RenderOutput, RenderSettings};
pub use scene::{Scene, SceneGradients, TriangleTopology, VertexSet};
