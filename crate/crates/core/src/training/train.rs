//! The optimisation loop.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;

use super::adam::LearningRates;
use super::config::TrainConfig;
use super::densify::densify;
use super::loss::{compute_loss, depth_align_loss, opacity_loss, LossTerms, LossWeights};
use super::prune::{prune, PrunePhase};
use super::schedule::{opacity_schedule, sigma_schedule};
use super::state::{init_soup, Stage, TrainState};
use crate::delaunay::{delaunay_3d, dual_edges};
use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Vec3};
use crate::io::image::linear_to_srgb;
use crate::io::{Dataset, View};
use crate::metrics::{psnr, ssim};
use crate::raster::{render, render_backward, RenderSettings};
use crate::restriction::{build_bvh, restrict};

/// One row of the metrics log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub iteration: u32,
    pub view: u32,
    pub terms: LossTerms,
    pub faces: usize,
    pub vertices: usize,
    pub o_t: f64,
    pub sigma: f64,
    pub stage: Stage,
}

pub const LOG_HEADER: &str = "iteration,view,loss,l1,dssim,normal,depth,opacity,vertex_depth,faces,vertices,o_t,sigma,stage";

impl LogRow {
    pub fn to_csv(&self) -> String {
        let t = &self.terms;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.iteration,
            self.view,
            t.total,
            t.l1,
            t.dssim,
            t.normal,
            t.depth,
            t.opacity,
            t.vertex_depth,
            self.faces,
            self.vertices,
            self.o_t,
            self.sigma,
            match self.stage {
                Stage::Soup => "soup",
                Stage::Mesh => "mesh",
            }
        )
    }
}

pub fn write_log_csv(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut s = String::with_capacity(rows.len() * 160);
    s.push_str(LOG_HEADER);
    s.push('\n');
    for r in rows {
        writeln!(s, "{}", r.to_csv()).unwrap();
    }
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Counts from a soup-to-mesh conversion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MeshCreation {
    pub soup_faces: usize,
    pub tetrahedra: usize,
    pub dual_edges: usize,
    pub mesh_faces: usize,
}

/// Replaces the soup by the restricted Delaunay triangulation of its vertices.
pub fn create_mesh(state: &mut TrainState) -> Result<MeshCreation> {
    let scene = &state.scene;
    let soup: Vec<[Vec3; 3]> = scene
        .topology
        .faces
        .iter()
        .map(|f| f.map(|i| scene.vertices.positions[i as usize]))
        .collect();
    let tets = delaunay_3d(&scene.vertices.positions)?;
    let edges = dual_edges(&tets);
    let bvh = build_bvh(&soup)?;
    let mesh = restrict(&tets, &edges, &bvh);
    let stats = MeshCreation {
        soup_faces: soup.len(),
        tetrahedra: tets.tets.len(),
        dual_edges: edges.len(),
        mesh_faces: mesh.faces.len(),
    };
    state.scene.topology.faces = mesh.faces;
    state.max_weight = vec![0.0; state.scene.num_faces()];
    let keep = vec![true; state.scene.num_faces()];
    state.retain_faces(&keep);
    state.stage = Stage::Mesh;
    Ok(stats)
}

/// Runs the two-stage optimisation over the training views of a dataset.
pub struct Trainer<'a> {
    pub config: TrainConfig,
    pub state: TrainState,
    views: Vec<&'a View>,
}

impl<'a> Trainer<'a> {
    pub fn new(dataset: &'a Dataset, config: TrainConfig) -> Result<Self> {
        let state = init_soup(&dataset.points, &config)?;
        Trainer::resume(dataset, config, state)
    }

    pub fn resume(dataset: &'a Dataset, config: TrainConfig, state: TrainState) -> Result<Self> {
        config.validate()?;
        let views: Vec<&View> = dataset.train_views().collect();
        if views.len() < 2 {
            return Err(Error::InvalidInput(format!("training needs at least 2 views, got {}", views.len())));
        }
        if let Some(v) = views.iter().find(|v| v.image.data.len() != (v.camera.width * v.camera.height) as usize) {
            return Err(Error::InvalidInput(format!("view `{}`: image does not match the camera size", v.name)));
        }
        Ok(Trainer { config, state, views })
    }

    pub fn is_done(&self) -> bool {
        self.state.iteration >= self.config.total_iterations
    }

    pub fn cameras(&self) -> Vec<&'a CameraModel> {
        self.views.iter().map(|v| &v.camera).collect()
    }

    fn next_view(&mut self) -> usize {
        let st = &mut self.state;
        if st.view_cursor as usize >= st.view_order.len() {
            st.view_order = (0..self.views.len() as u32).collect();
            st.view_order.shuffle(&mut st.rng);
            st.view_cursor = 0;
        }
        let v = st.view_order[st.view_cursor as usize] as usize;
        st.view_cursor += 1;
        v
    }

    /// Densification, pruning and mesh creation scheduled at the current iteration.
    fn structural_events(&mut self, o_t: f64) -> Result<()> {
        let c = &self.config;
        let it = self.state.iteration;
        if self.state.stage != Stage::Soup {
            return Ok(());
        }
        if it > 0 && it == c.hard_prune_iteration {
            let n = prune(&mut self.state, c, PrunePhase::Hard, o_t)?;
            log::info!("iteration {it}: opacity pruning removed {n} faces");
        }
        if it > 0 && it % c.densify_interval == 0 && it < c.mesh_creation_iteration {
            if it >= c.weight_prune_start {
                let n = prune(&mut self.state, c, PrunePhase::Weight, o_t)?;
                log::info!("iteration {it}: weight pruning removed {n} faces");
            }
            if it >= c.densify_from && it <= c.densify_until {
                let d = densify(&mut self.state, c, o_t);
                log::info!("iteration {it}: split {} faces, {} new vertices", d.split_faces, d.new_vertices);
            }
            self.state.max_weight.iter_mut().for_each(|w| *w = 0.0);
        }
        if it == c.mesh_creation_iteration {
            let m = create_mesh(&mut self.state)?;
            log::info!(
                "iteration {it}: restricted {} soup faces to {} mesh faces ({} tets, {} dual edges)",
                m.soup_faces,
                m.mesh_faces,
                m.tetrahedra,
                m.dual_edges
            );
        }
        Ok(())
    }

    pub fn step(&mut self) -> Result<LogRow> {
        let it = self.state.iteration;
        let c = self.config.clone();
        let o_t = opacity_schedule(it, &c);
        let sigma = sigma_schedule(it, &c);
        self.structural_events(o_t)?;
        if self.state.scene.num_faces() == 0 {
            return Err(Error::InvalidInput(format!("iteration {it}: every face has been pruned")));
        }
        self.state.scene.topology.shared_sigma = sigma;
        let vi = self.next_view();
        let view = self.views[vi];
        let settings = RenderSettings {
            supersample: if it >= c.supersample_start { c.supersample } else { 1 },
            background: c.background,
            record_contributions: true,
            ..RenderSettings::default()
        };
        let scene = &self.state.scene;
        let out = render(scene, &view.camera, o_t, &settings)?;
        let weights = LossWeights {
            ssim_lambda: c.ssim_lambda,
            beta_n: c.beta_n,
            beta_d: if view.depth.is_some() { c.beta_d } else { 0.0 },
        };
        let (mut terms, pixel_grads) = compute_loss(&out, &view.image.data, view.depth.as_deref(), &view.camera, &weights)?;
        let mut grads = render_backward(scene, &view.camera, o_t, &settings, &out, &pixel_grads)?;
        if c.beta_o > 0.0 {
            let (v, g) = opacity_loss(&scene.vertices, o_t);
            terms.opacity = v;
            terms.total += c.beta_o * v;
            for (a, b) in grads.d_opacity_logits.iter_mut().zip(&g) {
                *a += c.beta_o * b;
            }
        }
        if c.beta_z > 0.0 {
            let (v, g) = depth_align_loss(scene, &out, &view.camera);
            terms.vertex_depth = v;
            terms.total += c.beta_z * v;
            for (a, b) in grads.d_positions.iter_mut().zip(&g) {
                *a += b * c.beta_z;
            }
        }
        let pos_scale = if self.state.stage == Stage::Mesh { c.stage2_lr_factor } else { 1.0 };
        let lr = LearningRates {
            position: c.lr_position * pos_scale,
            opacity: c.lr_opacity,
            sh_dc: c.lr_feature,
            sh_rest: c.lr_feature * c.lr_feature_rest_factor,
        };
        let st = &mut self.state;
        st.adam.update(&mut st.scene.vertices, &grads, &lr);
        for (w, &o) in st.max_weight.iter_mut().zip(&out.max_weight) {
            *w = w.max(o);
        }
        st.iteration += 1;
        Ok(LogRow {
            iteration: it,
            view: vi as u32,
            terms,
            faces: st.scene.num_faces(),
            vertices: st.scene.num_vertices(),
            o_t,
            sigma,
            stage: st.stage,
        })
    }

    /// Final visibility pruning at the end of the schedule. Idempotent.
    pub fn finish(&mut self) -> Result<usize> {
        if self.state.finalized || self.config.total_iterations == 0 {
            return Ok(0);
        }
        let c = &self.config;
        self.state.scene.topology.shared_sigma = sigma_schedule(c.total_iterations, c);
        let settings = self.final_settings();
        let cams = self.cameras();
        let n = prune(&mut self.state, c, PrunePhase::Final(&cams, &settings), 1.0)?;
        log::info!("final pruning removed {n} faces");
        self.state.finalized = true;
        Ok(n)
    }

    pub fn final_settings(&self) -> RenderSettings {
        RenderSettings { supersample: self.config.supersample, background: self.config.background, ..RenderSettings::default() }
    }

    /// Steps to the end of the schedule, calling `on_step` after every
    /// iteration, then runs the final pruning.
    pub fn run(&mut self, mut on_step: impl FnMut(&TrainState, &LogRow) -> Result<()>) -> Result<Vec<LogRow>> {
        let mut rows = Vec::with_capacity((self.config.total_iterations - self.state.iteration.min(self.config.total_iterations)) as usize);
        while !self.is_done() {
            let row = self.step()?;
            on_step(&self.state, &row)?;
            rows.push(row);
        }
        self.finish()?;
        Ok(rows)
    }
}

/// Trains from scratch and returns the final state and the metrics log.
pub fn train(dataset: &Dataset, config: TrainConfig) -> Result<(TrainState, Vec<LogRow>)> {
    let mut t = Trainer::new(dataset, config)?;
    let rows = t.run(|_, _| Ok(()))?;
    Ok((t.state, rows))
}

/// Image quality of a scene on a set of views.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub per_view: Vec<(String, f64, f64)>,
    pub psnr: f64,
    pub ssim: f64,
}

/// Renders each view at O_t = 1 and compares against its image in sRGB.
pub fn evaluate(scene: &crate::scene::Scene, views: &[&View], settings: &RenderSettings) -> Result<Evaluation> {
    let mut per_view = Vec::with_capacity(views.len());
    for v in views {
        let out = render(scene, &v.camera, 1.0, settings)?;
        let a: Vec<[f64; 3]> = out.color.iter().map(|p| p.map(linear_to_srgb)).collect();
        let b: Vec<[f64; 3]> = v.image.data.iter().map(|p| p.map(linear_to_srgb)).collect();
        per_view.push((v.name.clone(), psnr(&a, &b), ssim(&a, &b, out.width, out.height)?));
    }
    let n = per_view.len().max(1) as f64;
    let psnr = per_view.iter().map(|r| r.1).sum::<f64>() / n;
    let ssim = per_view.iter().map(|r| r.2).sum::<f64>() / n;
    Ok(Evaluation { per_view, psnr, ssim })
}
