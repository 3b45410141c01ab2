//! Generates a small toy scene and runs the whole pipeline on it: hemisphere
//! sampling, point-cloud rendering, training and evaluation on held-out views.
//!
//!     cargo run --release --example train_toy [out_dir] [iterations]

use std::path::PathBuf;

use hemisplat::pipeline::{generate_toy_scene, run_pipeline, PipelineConfig, RunOptions, ToySceneSpec};

fn main() -> hemisplat::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("hemisplat-train-toy"));
    let iterations = args.next().and_then(|s| s.parse().ok()).unwrap_or(300);

    let spec = ToySceneSpec {
        width: 64,
        height: 64,
        focal: 50.0,
        tests: 4,
        ..Default::default()
    };
    let scene = out.join("scene");
    generate_toy_scene(&spec, &scene)?;

    let mut config = PipelineConfig::default();
    config.train.iterations = iterations;
    let run = run_pipeline(&scene, &config, &out.join("run"), &RunOptions::default())?;
    println!(
        "{} synthetic views, {} -> {} gaussians, objective {:.4} -> {:.4}",
        run.train.synthetic_views,
        run.train.initial_gaussians,
        run.train.final_gaussians,
        run.train.initial_objective,
        run.train.final_objective
    );
    for v in &run.report.views {
        println!("{}: psnr {:.2} ssim {:.3}", v.id, v.psnr, v.ssim);
    }
    println!("mean psnr {:.2}, outputs in {}", run.report.mean.psnr, out.join("run").display());
    Ok(())
}
