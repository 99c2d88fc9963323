//! Perturbs the bundled images with every protocol transform, rescores them
//! with the built-in high-frequency detector, and prints after/before ratios.
//!
//! ```sh
//! cargo run --release --example robustness
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use fairface::manifest::load_manifest;
use fairface::metrics::{evaluate, EvalConfig};
use fairface::perturb::{apply_suite, robustness_ratio, score_images, HighFrequencyScorer, Transform};
use fairface::report::ratio_markdown;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/faces");
    let m = load_manifest(root.join("manifest.csv"))?;
    let scorer = HighFrequencyScorer::default();
    let cfg = EvalConfig::default();
    let (preds, _) = score_images(&m, &root, &scorer);
    let before = evaluate(&preds, &m, None, &cfg)?;

    let work = std::env::temp_dir().join("fairface-robustness-example");
    let mut rows = BTreeMap::new();
    for t in std::iter::once(Transform::Identity).chain(Transform::suite()) {
        let dir = work.join(t.name());
        let out = apply_suite(&m, &root, &t, 0, &dir)?;
        let (preds, _) = score_images(&out.manifest, &dir, &scorer);
        let after = evaluate(&preds, &m, None, &cfg)?;
        rows.insert(t.name().to_string(), robustness_ratio(&after, &before)?);
    }
    print!("{}", ratio_markdown(&rows));
    Ok(())
}
