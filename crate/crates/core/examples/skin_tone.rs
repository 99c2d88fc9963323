//! Skin tone estimation on the bundled face images: landmark polygons give
//! the skin mask, k-means finds the dominant colour, and the nearest Monk
//! swatch gives the tone.
//!
//! ```sh
//! cargo run --example skin_tone
//! ```

use std::path::Path;

use fairface::manifest::load_manifest;
use fairface::skintone::{annotate_manifest, KMeansConfig, TonePalette};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/faces");
    let m = load_manifest(root.join("manifest.csv"))?;
    let res = annotate_manifest(&m, &root, &root.join("regions"), &TonePalette::monk(), &KMeansConfig::default(), 0);
    let agree = m
        .records
        .iter()
        .zip(&res.manifest.records)
        .filter(|(a, b)| a.skin_tone == b.skin_tone)
        .count();
    for (id, e) in res.estimates.iter().take(5) {
        println!("{id}: tone {} rgb {:?} share {:.2}", e.tone, e.dominant_rgb, e.cluster_share);
    }
    println!("{agree}/{} estimates match the generated tone, {} failures", m.len(), res.failures.len());
    Ok(())
}
