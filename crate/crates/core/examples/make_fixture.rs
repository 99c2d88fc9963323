//! Writes the synthetic face fixture (images, landmarks, manifest, features,
//! detector scores) to a directory.
//!
//! ```sh
//! cargo run --example make_fixture -- /tmp/fixture 100
//! ```

use std::path::PathBuf;

use fairface::synthetic::{write_fixture, FixtureSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixture".into()));
    let n = args.next().map(|s| s.parse()).transpose()?.unwrap_or(100);
    let layout = write_fixture(&dir, &FixtureSpec { n, ..FixtureSpec::default() })?;
    println!("manifest     {}", layout.manifest.display());
    println!("images       {}", layout.images.display());
    println!("regions      {}", layout.regions.display());
    println!("features     {}", layout.features.display());
    println!("predictions  {}", layout.predictions.display());
    Ok(())
}
