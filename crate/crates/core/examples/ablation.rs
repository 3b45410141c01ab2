//! Runs the component and sampling-strategy ablations on a toy scene.
//!
//!     cargo run --release --example ablation [out_dir] [iterations] [seed]

use std::path::PathBuf;

use hemisplat::pipeline::{generate_toy_scene, run_ablation, PipelineConfig, ToySceneSpec};

fn main() -> hemisplat::Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let mut args = std::env::args().skip(1);
    let out = args
        .next()
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("hemisplat-ablation"));
    let iterations = args.next().and_then(|s| s.parse().ok()).unwrap_or(1000);
    let seed = args.next().and_then(|s| s.parse().ok()).unwrap_or(0);

    let scene = out.join("scene");
    generate_toy_scene(&ToySceneSpec { seed, ..Default::default() }, &scene)?;
    let mut config = PipelineConfig::default();
    config.train.iterations = iterations;
    config.train.seed = seed;
    let report = run_ablation(&scene, &config, &out)?;

    println!("{:<4} {:>7} {:>7} {:>9}  description", "row", "psnr", "ssim", "objective");
    for r in &report.rows {
        println!(
            "{:<4} {:>7.2} {:>7.3} {:>9.4}  {}",
            r.id, r.metrics.psnr, r.metrics.ssim, r.final_objective, r.description
        );
    }
    for s in &report.strategies {
        println!("{:<10?} {} views, psnr {:.2}", s.strategy, s.synthetic_views, s.metrics.psnr);
    }
    Ok(())
}
