//! Renders the toy point cloud from one held-out camera with square splats
//! and saves the image next to its validity mask.
//!
//!     cargo run --example render_pointcloud [out_dir]

use std::path::PathBuf;

use hemisplat::image::save_mask_png;
use hemisplat::pipeline::ToySceneSpec;
use hemisplat::pointcloud::{render_points, SplatConfig};

fn main() -> hemisplat::Result<()> {
    let out = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| std::env::temp_dir().join("hemisplat-render-pointcloud"));
    std::fs::create_dir_all(&out).map_err(|source| hemisplat::Error::Io {
        path: out.clone(),
        source,
    })?;

    let spec = ToySceneSpec::default();
    let cloud = spec.sample_cloud(spec.points, 0)?;
    let pose = spec.test_poses()?[0];
    for radius in [0, 1, 2] {
        let config = SplatConfig {
            splat_radius: radius,
            ..Default::default()
        };
        let img = render_points(&cloud, &pose, &config)?;
        img.rgb.save_png(out.join(format!("radius_{radius}.png")))?;
        save_mask_png(&img.mask, img.width(), img.height(), out.join(format!("radius_{radius}_mask.png")))?;
        println!("radius {radius}: {:.1}% of pixels covered", 100.0 * img.coverage());
    }
    println!("images in {}", out.display());
    Ok(())
}
