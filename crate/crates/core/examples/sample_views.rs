//! Places 50 synthetic cameras on a hemisphere above a four-camera ring and
//! prints how they are spread over elevation levels.
//!
//!     cargo run --example sample_views [poses.json]

use hemisplat::pipeline::ToySceneSpec;
use hemisplat::sampler::{level_counts, sample_poses, HemisphereConfig};

fn main() -> hemisplat::Result<()> {
    let refs = ToySceneSpec::default().reference_poses()?;
    let config = HemisphereConfig {
        levels: 5,
        tau: 0.8,
        ..Default::default()
    };
    let set = sample_poses(&config, &refs)?;
    println!("{} poses, per level {:?}", set.len(), level_counts(&config)?);
    for level in 1..=config.levels {
        let first = set.level_of.iter().position(|&l| l == level).unwrap();
        let s = &set.spherical[first];
        println!(
            "level {level}: elevation {:5.1}°, radius {:.3}",
            s.phi.to_degrees(),
            s.radius
        );
    }
    if let Some(path) = std::env::args().nth(1) {
        set.write(&path)?;
        println!("wrote {path}");
    }
    Ok(())
}
