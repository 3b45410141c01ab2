//! Scores a blurred and a noisy copy of a test pattern, and shows how the
//! synthetic-view weight grows with distance from the reference cameras.
//!
//!     cargo run --example image_metrics

use hemisplat::camera::{CameraPose, Intrinsics, Vec3};
use hemisplat::image::ImageRgb;
use hemisplat::metrics::{distance_weight, l1, psnr, ssim, GradientPyramid, PerceptualMetric};

fn pattern(x: usize, y: usize) -> [f64; 3] {
    let v = if (x / 4 + y / 4).is_multiple_of(2) { 0.8 } else { 0.2 };
    [v, 0.5 * v, 1.0 - v]
}

fn camera(p: Vec3) -> hemisplat::Result<CameraPose> {
    CameraPose::looking_at(p, Vec3::zeros(), Vec3::z(), Intrinsics::centered(40.0, 32, 32)?)
}

fn main() -> hemisplat::Result<()> {
    let clean = ImageRgb::from_fn(32, 32, pattern);
    let blurred = ImageRgb::from_fn(32, 32, |x, y| {
        let mut acc = [0.0; 3];
        for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
            let p = pattern((x + dx).min(31), (y + dy).min(31));
            for c in 0..3 {
                acc[c] += p[c] / 4.0;
            }
        }
        acc
    });
    let noisy = ImageRgb::from_fn(32, 32, |x, y| {
        let n = if (x * 7 + y * 13) % 5 < 2 { 0.08 } else { -0.05 };
        pattern(x, y).map(|v| (v + n).clamp(0.0, 1.0))
    });
    let perceptual = GradientPyramid::default();
    for (name, img) in [("blurred", &blurred), ("noisy", &noisy)] {
        println!(
            "{name:8} psnr {:6.2} dB  ssim {:.4}  l1 {:.4}  perceptual {:.4}",
            psnr(img, &clean)?,
            ssim(img, &clean)?,
            l1(img, &clean, None)?,
            perceptual.distance(img, &clean)?
        );
    }

    let refs = [Vec3::x(), -Vec3::x(), Vec3::y(), -Vec3::y()].map(|p| camera(p * 3.0)).into_iter().collect::<Result<Vec<_>, _>>()?;
    for height in [0.0, 1.0, 2.0, 3.0] {
        let pose = camera(Vec3::new(2.0, 2.0, height))?;
        println!("camera at height {height}: lambda {:.3}", distance_weight(&pose, &refs)?);
    }
    Ok(())
}
