use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use hemisplat::camera::read_pose_file;
use hemisplat::pipeline::{
    enhance_images, evaluate_dirs, generate_toy_scene, ingest_scene, render_pointcloud_views, render_views,
    run_ablation, run_pipeline, synthetic_poses, train_model, view_file_name, PipelineConfig, RunOptions, Strategy,
    ToySceneSpec, POSES_FILE,
};
use hemisplat::pointcloud::load_ply;
use hemisplat::splat::{load_checkpoint, save_checkpoint};
use hemisplat::{Error, Result};

#[derive(Parser)]
#[command(name = "hemisplat", version, about = "Sparse-view reconstruction with hemisphere-sampled synthetic views")]
struct Cli {
    /// Seed for sampling, initialization and training (overrides the config file).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Single worker thread, for bit-stable output.
    #[arg(long, global = true, conflicts_with = "threads")]
    deterministic: bool,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Pipeline configuration as JSON; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a procedural toy scene with ground-truth test views.
    GenToy(GenToyArgs),
    /// Validate a scene directory and print a summary.
    Ingest {
        #[arg(long)]
        scene: PathBuf,
    },
    /// Place synthetic cameras around a scene's references.
    SampleViews(SampleArgs),
    /// Render a point cloud at each pose, with validity masks.
    RenderPointcloud {
        #[arg(long)]
        ply: PathBuf,
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pass synthetic views through an external enhancement command.
    Enhance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Shell command with `{input}` and `{output}` placeholders; omitted means copy.
        #[arg(long)]
        template: Option<String>,
    },
    /// Train a Gaussian model on a scene and optional synthetic views.
    Train {
        #[arg(long)]
        scene: PathBuf,
        /// Directory of synthetic views (`poses.json`, images, optional masks).
        #[arg(long)]
        synthetic: Option<PathBuf>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Render a trained model at the given poses.
    Render {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        poses: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score rendered images against same-named ground truth.
    Evaluate {
        #[arg(long)]
        rendered: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every stage end to end.
    Run(SceneOut),
    /// Run the component and sampling-strategy ablations.
    Ablate(SceneOut),
}

#[derive(Args)]
struct GenToyArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    refs: Option<usize>,
    #[arg(long)]
    tests: Option<usize>,
    /// Image width and height.
    #[arg(long)]
    size: Option<u32>,
}

#[derive(Args)]
struct SampleArgs {
    /// Scene directory whose `ref_poses.json` anchors the sampler.
    #[arg(long, required_unless_present = "refs")]
    scene: Option<PathBuf>,
    /// Reference pose file, instead of `--scene`.
    #[arg(long, conflicts_with = "scene")]
    refs: Option<PathBuf>,
    #[arg(long)]
    levels: Option<usize>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    strategy: Option<Strategy>,
    /// View count for the trajectory strategy.
    #[arg(long)]
    count: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SceneOut {
    #[arg(long)]
    scene: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    iters: Option<usize>,
}

fn configure_threads(cli: &Cli) -> Result<()> {
    let threads = if cli.deterministic { Some(1) } else { cli.threads };
    if let Some(n) = threads {
        if n == 0 {
            return Err(Error::InvalidInput("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::InvalidInput(format!("cannot size the thread pool: {e}")))?;
    }
    Ok(())
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
    }
    Ok(cfg)
}

fn print_json(v: &serde_json::Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json"));
}

fn execute(cli: &Cli) -> Result<()> {
    configure_threads(cli)?;
    let mut cfg = load_config(cli)?;
    match &cli.command {
        Command::GenToy(a) => {
            let mut spec = ToySceneSpec {
                seed: cli.seed.unwrap_or(0),
                ..Default::default()
            };
            if let Some(v) = a.points {
                spec.points = v;
            }
            if let Some(v) = a.refs {
                spec.refs = v;
            }
            if let Some(v) = a.tests {
                spec.tests = v;
            }
            if let Some(v) = a.size {
                spec.width = v;
                spec.height = v;
            }
            let scene = generate_toy_scene(&spec, &a.out)?;
            let min = |v: &[f64]| v.iter().copied().fold(1.0, f64::min);
            print_json(&json!({
                "out": a.out,
                "references": scene.reference_coverage.len(),
                "tests": scene.test_coverage.len(),
                "min_coverage": min(&scene.reference_coverage).min(min(&scene.test_coverage)),
            }));
        }
        Command::Ingest { scene } => {
            let b = ingest_scene(scene)?;
            let cloud = load_ply(&b.cloud_path)?;
            print_json(&json!({
                "references": b.references.len(),
                "tests": b.tests.as_ref().map_or(0, |t| t.len()),
                "points": cloud.len(),
            }));
        }
        Command::SampleViews(a) => {
            let refs_path = match (&a.refs, &a.scene) {
                (Some(r), _) => r.clone(),
                (None, Some(s)) => s.join(hemisplat::pipeline::REF_POSES_FILE),
                (None, None) => unreachable!("clap requires one of them"),
            };
            if !refs_path.is_file() {
                return Err(Error::MissingFile(refs_path));
            }
            let refs = read_pose_file(&refs_path)?;
            if let Some(v) = a.levels {
                cfg.sampler.levels = v;
            }
            if let Some(v) = a.tau {
                cfg.sampler.tau = v;
            }
            if let Some(v) = a.strategy {
                cfg.strategy = v;
            }
            if a.count.is_some() {
                cfg.trajectory_views = a.count;
            }
            cfg.validate()?;
            let set = synthetic_poses(&cfg, &refs)?;
            set.write(&a.out)?;
            print_json(&json!({ "poses": set.len(), "out": a.out }));
        }
        Command::RenderPointcloud { ply, poses, out } => {
            cfg.render.validate()?;
            let cloud = load_ply(ply)?;
            let cams = read_pose_file(poses)?;
            let coverage = render_pointcloud_views(&cloud, &cams, &cfg.render, out)?;
            std::fs::copy(poses, out.join(POSES_FILE)).map_err(|e| Error::Io {
                path: poses.clone(),
                source: e,
            })?;
            print_json(&json!({ "views": cams.len(), "mean_coverage": coverage }));
        }
        Command::Enhance { input, out, template } => {
            let n = enhance_images(input, out, template.as_deref().or(cfg.enhance.as_deref()))?;
            print_json(&json!({ "images": n }));
        }
        Command::Train {
            scene,
            synthetic,
            iters,
            out,
        } => {
            if let Some(n) = iters {
                cfg.train.iterations = *n;
            }
            cfg.validate()?;
            let bundle = ingest_scene(scene)?;
            let (cloud, summary) = train_model(&bundle, synthetic.as_deref(), &cfg)?;
            save_checkpoint(&cloud, out)?;
            print_json(&json!({
                "gaussians": summary.final_gaussians,
                "initial_objective": summary.initial_objective,
                "final_objective": summary.final_objective,
                "synthetic_views": summary.synthetic_views,
            }));
        }
        Command::Render { model, poses, out } => {
            let cloud = load_checkpoint(model)?;
            let cams = read_pose_file(poses)?;
            let names: Vec<String> = (0..cams.len()).map(view_file_name).collect();
            render_views(&cloud, &cams, &names, &cfg.train.raster(), out)?;
            print_json(&json!({ "views": cams.len() }));
        }
        Command::Evaluate { rendered, truth, out } => {
            let report = evaluate_dirs(rendered, truth)?;
            report.write(out)?;
            print_json(&serde_json::to_value(report.mean).expect("json"));
        }
        Command::Run(a) => {
            apply_iters(&mut cfg, a);
            let s = run_pipeline(&a.scene, &cfg, &a.out, &RunOptions::default())?;
            print_json(&json!({
                "mean": s.report.mean,
                "synthetic_views": s.train.synthetic_views,
                "initial_objective": s.train.initial_objective,
                "final_objective": s.train.final_objective,
            }));
        }
        Command::Ablate(a) => {
            apply_iters(&mut cfg, a);
            let r = run_ablation(&a.scene, &cfg, &a.out)?;
            print_json(&serde_json::to_value(&r).expect("json"));
        }
    }
    Ok(())
}

fn apply_iters(cfg: &mut PipelineConfig, a: &SceneOut) {
    if let Some(n) = a.iters {
        cfg.train.iterations = n;
    }
}

fn report(e: &Error) {
    eprintln!("error: {e}");
    let mut src = std::error::Error::source(e);
    while let Some(s) = src {
        eprintln!("  caused by: {s}");
        src = s.source();
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            report(&e);
            ExitCode::from(if e.is_validation() { 2 } else { 3 })
        }
    }
}
