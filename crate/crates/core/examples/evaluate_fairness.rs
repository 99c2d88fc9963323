//! Utility and fairness metrics for the bundled detector scores, rendered
//! as markdown.
//!
//! ```sh
//! cargo run --example evaluate_fairness
//! ```

use std::path::Path;

use fairface::features::read_features;
use fairface::manifest::load_manifest;
use fairface::metrics::{evaluate, load_predictions, EvalConfig};
use fairface::report::{render, Format};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/faces");
    let m = load_manifest(root.join("manifest.csv"))?;
    let preds = load_predictions(root.join("predictions.csv"))?;
    let fm = read_features(root.join("features.ffb"))?;
    let report = evaluate(&preds, &m, Some(&fm), &EvalConfig::default())?;
    print!("{}", render(&report, Format::Markdown));
    Ok(())
}
