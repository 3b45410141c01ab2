//! Compares the rasterizer's analytic gradients with central differences on a
//! few random scenes.
//!
//!     cargo run --example gradient_check

use hemisplat::image::ImageRgb;
use hemisplat::splat::gradcheck::{check_gradients, random_scene, PARAM_NAMES};
use hemisplat::splat::RasterConfig;
use rand::{Rng, SeedableRng};

fn main() -> hemisplat::Result<()> {
    for seed in 0..3 {
        let (cloud, pose) = random_scene(seed, 10, 16)?;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let weights = ImageRgb::from_fn(16, 16, |_, _| [0; 3].map(|_: u8| rng.gen_range(-1.0..1.0)));
        let report = check_gradients(&cloud, &pose, &RasterConfig::default(), &weights, 1e-4, 1e-8)?;
        let worst = report.worst.expect("scene has parameters");
        println!(
            "seed {seed}: {} parameters, worst {:.2e} at gaussian {} {} (analytic {:.6}, numeric {:.6})",
            report.checked,
            worst.relative_error,
            worst.gaussian,
            PARAM_NAMES[worst.param],
            worst.analytic,
            worst.numeric
        );
    }
    Ok(())
}
