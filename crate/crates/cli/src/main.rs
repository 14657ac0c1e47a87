use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

use meshsplat::analysis::{connectivity_report, segment_by_masks, ConnectivityReport, NEIGHBOR_BINS};
use meshsplat::io::image::{save_depth_png, save_png, save_png_srgb, Image};
use meshsplat::io::manifest::read_manifest;
use meshsplat::io::{export_mesh, load_checkpoint, load_manifest, load_mesh, save_checkpoint, MeshFormat, ViewEntry};
use meshsplat::synth::{generate, SynthKind, SynthOptions};
use meshsplat::training::{evaluate, write_log_csv, Preset, TrainConfig, Trainer};
use meshsplat::{render, RenderSettings, Scene};

#[derive(Parser)]
#[command(name = "meshsplat", version, about = "Train, render and export triangle-splatting meshes")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML training configuration (overrides the preset).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// RNG seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Directory receiving every output file.
    #[arg(long, global = true, default_value = "out")]
    output_dir: PathBuf,
    /// Hyperparameter preset.
    #[arg(long, global = true, value_parser = ["outdoor", "indoor"], default_value = "outdoor")]
    preset: String,
}

#[derive(Subcommand)]
enum Command {
    /// Optimise a mesh from a scene manifest.
    Train {
        /// Scene manifest (scene.json).
        #[arg(long)]
        manifest: PathBuf,
        /// Total iterations; milestones are scaled proportionally.
        #[arg(long)]
        iters: Option<u32>,
        /// Write checkpoints/iter_NNNNNN.ckpt every N iterations.
        #[arg(long)]
        checkpoint_every: Option<u32>,
        /// Continue from a checkpoint instead of initialising from the SfM points.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Render a checkpoint from a manifest view or a pose file.
    Render {
        /// Checkpoint written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Manifest providing the view and its ground-truth image.
        #[arg(long, requires = "view")]
        manifest: Option<PathBuf>,
        /// Index into the manifest's view list.
        #[arg(long, conflicts_with = "pose", requires = "manifest")]
        view: Option<usize>,
        /// JSON camera: width, height, fx, fy, cx, cy, rotation, translation, near.
        #[arg(long, required_unless_present = "view")]
        pose: Option<PathBuf>,
        /// Subpixels per axis.
        #[arg(long, default_value_t = 1)]
        supersample: u32,
        /// Color image name inside the output directory.
        #[arg(long, default_value = "render.png")]
        out: PathBuf,
    },
    /// Write the mesh of a checkpoint as PLY or OBJ.
    ExportMesh {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Output name; the extension selects PLY or OBJ.
        #[arg(long, default_value = "mesh.ply")]
        out: PathBuf,
    },
    /// Connectivity statistics of a mesh file or checkpoint.
    Stats {
        #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
        mesh: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Extract the faces seen inside the manifest's view masks.
    Segment {
        #[arg(long, conflicts_with = "checkpoint", required_unless_present = "checkpoint")]
        mesh: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Manifest whose views carry object masks.
        #[arg(long)]
        manifest: PathBuf,
        /// Subpixels per axis.
        #[arg(long, default_value_t = 1)]
        supersample: u32,
        #[arg(long, default_value = "segment.ply")]
        out: PathBuf,
    },
    /// Generate a synthetic dataset with exact ground truth.
    Synth {
        #[arg(long, value_parser = ["sphere-plane", "two-spheres", "textured-cube"])]
        scene: String,
        /// Training views; a fifth as many test views are added.
        #[arg(long, default_value_t = 20)]
        views: u32,
        /// Image size as WIDTHxHEIGHT.
        #[arg(long, default_value = "128x128")]
        res: String,
        /// Subpixels per axis for the ground-truth renders.
        #[arg(long, default_value_t = 8)]
        supersample: u32,
        /// Number of SfM-style initial points.
        #[arg(long, default_value_t = 1500)]
        points: usize,
    },
}

/// Failure classes mapped to exit codes.
enum Failure {
    Input(anyhow::Error),
    Internal(anyhow::Error),
}

impl From<meshsplat::Error> for Failure {
    fn from(e: meshsplat::Error) -> Self {
        use meshsplat::Error as E;
        match e {
            E::Delaunay(_) | E::DegenerateTriangle | E::MissingContributionLog => Failure::Internal(e.into()),
            _ => Failure::Input(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        match e.downcast::<meshsplat::Error>() {
            Ok(m) => m.into(),
            Err(e) => Failure::Internal(e),
        }
    }
}

type Outcome<T = ()> = Result<T, Failure>;

fn input(msg: impl Into<String>) -> Failure {
    Failure::Input(anyhow!(msg.into()))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
        Err(Failure::Internal(e)) => {
            eprintln!("internal error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Outcome {
    if let Some(n) = cli.common.threads {
        if n == 0 {
            return Err(input("--threads must be positive"));
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::Internal(e.into()))?;
    }
    let out = &cli.common.output_dir;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display())).map_err(Failure::Input)?;
    match &cli.command {
        Command::Train { manifest, iters, checkpoint_every, resume } => {
            train(&cli.common, manifest, *iters, *checkpoint_every, resume.as_deref())
        }
        Command::Render { checkpoint, manifest, view, pose, supersample, out: name } => {
            render_cmd(out, checkpoint, manifest.as_deref(), *view, pose.as_deref(), *supersample, name)
        }
        Command::ExportMesh { checkpoint, out: name } => {
            let (state, _) = load_checkpoint(checkpoint)?;
            let path = out.join(name);
            export_mesh(&state.scene, &path, MeshFormat::from_path(&path)?)?;
            println!("wrote {} ({} vertices, {} faces)", path.display(), state.scene.num_vertices(), state.scene.num_faces());
            Ok(())
        }
        Command::Stats { mesh, checkpoint } => {
            let scene = load_scene(mesh.as_deref(), checkpoint.as_deref())?;
            let report = connectivity_report(&scene);
            print_report(&report);
            write_json(&out.join("stats.json"), &serde_json::to_value(&report).expect("report serialises"))
        }
        Command::Segment { mesh, checkpoint, manifest, supersample, out: name } => {
            let scene = load_scene(mesh.as_deref(), checkpoint.as_deref())?;
            let (_, data) = load_manifest(manifest)?;
            let views: Vec<_> = data.views.iter().filter(|v| v.mask.is_some()).collect();
            if views.is_empty() {
                return Err(input(format!("{}: no view has a mask", manifest.display())));
            }
            let cams: Vec<_> = views.iter().map(|v| &v.camera).collect();
            let masks: Vec<&[bool]> = views.iter().map(|v| v.mask.as_deref().unwrap()).collect();
            let settings = RenderSettings::default().with_supersample(check_supersample(*supersample)?);
            let seg = segment_by_masks(&scene, &cams, &masks, &settings)?;
            let path = out.join(name);
            export_mesh(&seg.mesh, &path, MeshFormat::from_path(&path)?)?;
            let faces: Vec<u32> = seg.faces.clone();
            write_json(&out.join("segment_faces.json"), &json!({ "faces": faces }))?;
            println!("selected {} of {} faces -> {}", seg.faces.len(), scene.num_faces(), path.display());
            Ok(())
        }
        Command::Synth { scene, views, res, supersample, points } => {
            let kind: SynthKind = scene.parse()?;
            let (w, h) = parse_res(res)?;
            let opts = SynthOptions {
                seed: cli.common.seed.unwrap_or(0),
                supersample: check_supersample(*supersample)?,
                points: *points,
                ..SynthOptions::new(kind, *views, w, h)
            };
            let m = generate(&opts, out)?;
            println!("wrote {} views to {}", m.views.len(), out.join("scene.json").display());
            Ok(())
        }
    }
}

fn check_supersample(s: u32) -> Outcome<u32> {
    if s == 0 {
        return Err(input("--supersample must be at least 1"));
    }
    Ok(s)
}

fn parse_res(s: &str) -> Outcome<(u32, u32)> {
    let bad = || input(format!("--res must look like 128x128, got `{s}`"));
    let (w, h) = s.split_once('x').ok_or_else(bad)?;
    let w: u32 = w.parse().map_err(|_| bad())?;
    let h: u32 = h.parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

fn load_scene(mesh: Option<&Path>, checkpoint: Option<&Path>) -> Outcome<Scene> {
    match (mesh, checkpoint) {
        (Some(m), _) => Ok(load_mesh(m)?),
        (None, Some(c)) => Ok(load_checkpoint(c)?.0.scene),
        (None, None) => Err(input("either --mesh or --checkpoint is required")),
    }
}

fn write_json(path: &Path, v: &serde_json::Value) -> Outcome {
    let text = serde_json::to_string_pretty(v).expect("json serialises");
    fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display())).map_err(Failure::Input)
}

fn print_report(r: &ConnectivityReport) {
    let bins: Vec<String> = r
        .neighbor_histogram
        .iter()
        .enumerate()
        .filter(|(_, &n)| n > 0)
        .map(|(k, n)| if k == NEIGHBOR_BINS - 1 { format!("4+: {n}") } else { format!("{k}: {n}") })
        .collect();
    println!("faces: {}", r.faces);
    println!("vertices: {}", r.vertices);
    println!("neighbor histogram: {{{}}}", bins.join(", "));
    println!("mean neighbors: {:.4}", r.mean_neighbors);
    println!("isolated fraction: {:.4}", r.isolated_fraction);
    println!("mean valence: {:.4}", r.mean_valence);
    println!("median valence: {}", r.median_valence);
    println!("vertex/face ratio: {:.4}", r.vertex_face_ratio);
}

fn train_config(common: &Common, iters: Option<u32>) -> Outcome<TrainConfig> {
    let mut c = match &common.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::preset(common.preset.parse::<Preset>()?),
    };
    if let Some(s) = common.seed {
        c.seed = s;
    }
    if let Some(n) = iters {
        c = c.scaled_to(n);
    }
    c.validate()?;
    Ok(c)
}

fn train(common: &Common, manifest: &Path, iters: Option<u32>, every: Option<u32>, resume: Option<&Path>) -> Outcome {
    let out = &common.output_dir;
    let (_, data) = load_manifest(manifest)?;
    let mut trainer = match resume {
        Some(p) => {
            let (state, config) = load_checkpoint(p)?;
            Trainer::resume(&data, config, state)?
        }
        None => {
            let mut config = train_config(common, iters)?;
            let views = data.train_views().count() as u32;
            if config.densify_interval < views {
                log::info!("raising densify_interval from {} to {views} to cover every training view", config.densify_interval);
                config.densify_interval = views;
            }
            Trainer::new(&data, config)?
        }
    };
    fs::write(out.join("config.toml"), trainer.config.to_toml())
        .with_context(|| format!("writing {}", out.join("config.toml").display()))
        .map_err(Failure::Input)?;
    let ckpt_dir = out.join("checkpoints");
    if every.is_some() {
        fs::create_dir_all(&ckpt_dir).with_context(|| format!("creating {}", ckpt_dir.display())).map_err(Failure::Input)?;
    }
    let config = trainer.config.clone();
    let total = config.total_iterations;
    let rows = trainer.run(|state, row| {
        if row.iteration % 100 == 0 || row.iteration + 1 == total {
            log::info!(
                "iter {:>6}  loss {:.5}  faces {:>7}  vertices {:>7}  O_t {:.3}  sigma {:.4}",
                row.iteration,
                row.terms.total,
                row.faces,
                row.vertices,
                row.o_t,
                row.sigma
            );
        }
        if let Some(k) = every.filter(|&k| k > 0) {
            if state.iteration % k == 0 {
                save_checkpoint(state, &config, &ckpt_dir.join(format!("iter_{:06}.ckpt", state.iteration)))?;
            }
        }
        Ok(())
    })?;
    let state = &trainer.state;
    write_log_csv(&out.join("metrics.csv"), &rows)?;
    save_checkpoint(state, &config, &out.join("final.ckpt"))?;
    export_mesh(&state.scene, &out.join("mesh.ply"), MeshFormat::Ply)?;
    let report = connectivity_report(&state.scene);
    write_json(&out.join("connectivity.json"), &serde_json::to_value(&report).expect("report serialises"))?;
    let test: Vec<_> = data.test_views().collect();
    if !test.is_empty() {
        let eval = evaluate(&state.scene, &test, &trainer.final_settings())?;
        println!("test views: PSNR {:.3} dB, SSIM {:.4}", eval.psnr, eval.ssim);
        let per_view: Vec<_> = eval.per_view.iter().map(|(n, p, s)| json!({ "view": n, "psnr": p, "ssim": s })).collect();
        write_json(&out.join("eval.json"), &json!({ "psnr": eval.psnr, "ssim": eval.ssim, "views": per_view }))?;
    }
    print_report(&report);
    Ok(())
}

#[derive(serde::Deserialize)]
#[serde(deny_unknown_fields)]
struct Pose {
    width: u32,
    height: u32,
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    rotation: [[f64; 3]; 3],
    translation: [f64; 3],
    #[serde(default = "default_near")]
    near: f64,
}

fn default_near() -> f64 {
    0.01
}

fn render_cmd(
    out: &Path,
    checkpoint: &Path,
    manifest: Option<&Path>,
    view: Option<usize>,
    pose: Option<&Path>,
    supersample: u32,
    name: &Path,
) -> Outcome {
    let (state, _) = load_checkpoint(checkpoint)?;
    let (camera, gt) = match (manifest, view, pose) {
        (Some(m), Some(i), _) => {
            let parsed = read_manifest(m)?;
            if i >= parsed.views.len() {
                return Err(input(format!("view index {i} out of range ({} views in {})", parsed.views.len(), m.display())));
            }
            let (_, data) = load_manifest(m)?;
            let v = &data.views[i];
            (v.camera.clone(), Some(v.image.clone()))
        }
        (_, _, Some(p)) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display())).map_err(Failure::Input)?;
            let pose: Pose = serde_json::from_str(&text).map_err(|e| input(format!("{}: {e}", p.display())))?;
            let entry = ViewEntry {
                name: "pose".into(),
                image: PathBuf::new(),
                width: pose.width,
                height: pose.height,
                fx: pose.fx,
                fy: pose.fy,
                cx: pose.cx,
                cy: pose.cy,
                rotation: pose.rotation,
                translation: pose.translation,
                near: pose.near,
                depth: None,
                mask: None,
                split: Default::default(),
            };
            (entry.camera()?, None)
        }
        _ => return Err(input("either --view with --manifest or --pose is required")),
    };
    let settings = RenderSettings::default().with_supersample(check_supersample(supersample)?);
    let r = render(&state.scene, &camera, 1.0, &settings)?;
    let img = Image::new(r.width, r.height, r.color.clone())?;
    let color_path = out.join(name);
    save_png_srgb(&color_path, &img)?;
    let stem = color_path.with_extension("");
    let stem = stem.to_string_lossy();
    save_depth_png(Path::new(&format!("{stem}_depth.png")), r.width, r.height, &r.depth, meshsplat::synth::DEPTH_SCALE)?;
    let normals: Vec<[f64; 3]> = r.normal.iter().map(|n| [0.5 - 0.5 * n.x, 0.5 - 0.5 * n.y, 0.5 - 0.5 * n.z]).collect();
    save_png(Path::new(&format!("{stem}_normal.png")), &Image::new(r.width, r.height, normals)?)?;
    println!("wrote {}", color_path.display());
    if let Some(gt) = gt {
        if (gt.width, gt.height) != (r.width, r.height) {
            bail_input(format!("ground truth is {}x{}, render is {}x{}", gt.width, gt.height, r.width, r.height))?;
        }
        let a = img.to_srgb().data;
        let b = gt.to_srgb().data;
        let psnr = meshsplat::metrics::psnr(&a, &b);
        let ssim = meshsplat::metrics::ssim(&a, &b, r.width, r.height)?;
        println!("PSNR {psnr:.3} dB, SSIM {ssim:.4}");
    }
    Ok(())
}

fn bail_input(msg: String) -> Outcome {
    Err(Failure::Input(anyhow::Error::msg(msg)))
}
