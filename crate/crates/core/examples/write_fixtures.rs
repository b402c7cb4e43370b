//! Regenerates the bundled fixture PNGs.
//!
//! ```text
//! cargo run -p ciconv --example write_fixtures -- fixtures
//! ```

use std::path::PathBuf;

use ciconv::fixtures::{blobs, bundled_name, BUNDLED_SEEDS, FIXTURE_SIZE};
use ciconv::image_io::encode_rgb_png;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir)?;
    for seed in BUNDLED_SEEDS {
        let img = blobs(seed, FIXTURE_SIZE)?;
        let path = dir.join(bundled_name(seed));
        std::fs::write(&path, encode_rgb_png(&img)?)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
