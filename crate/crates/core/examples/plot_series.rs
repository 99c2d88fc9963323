//! Plot-ready series from a stored report: intersectional F_EO and AUC per
//! subset, and the false positive rate of each gender-by-tone subgroup.
//!
//! ```sh
//! cargo run --example plot_series
//! ```

use fairface::report::{radar_data, read_report, subgroup_bars};

const GOLDEN: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/faces/golden_report.json");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let report = read_report(GOLDEN)?;
    for p in radar_data(&report)? {
        println!("{:<10} F_EO {:>8.3}%  AUC {:>8.3}%", p.subset, p.f_eo.unwrap_or(f64::NAN), p.auc.unwrap_or(f64::NAN));
    }
    let bars = subgroup_bars(&report)?;
    for (g, v) in &bars.bars {
        println!("{g}: FPR {}", v.map_or("n/a".into(), |v| format!("{v:.3}%")));
    }
    println!("min FPR line: {:?}", bars.min_fpr);
    Ok(())
}
