//! Stratified train/test split and ratio rebalancing of a manifest.
//!
//! ```sh
//! cargo run --example split_and_sample
//! ```

use fairface::manifest::{assign_split, load_manifest, rebalance, subsample, SamplingSpec, Split, StrataField};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/faces/manifest.csv");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let m = load_manifest(FIXTURE)?;
    let strata: Vec<StrataField> = ["subset", "gender"].iter().map(|s| s.parse()).collect::<Result<_, _>>()?;
    let split = assign_split(&m, 0.2, &strata, 42)?;
    let test = split.records.iter().filter(|r| r.split == Split::Test).count();
    println!("{} records: {} train, {test} test", m.len(), m.len() - test);

    let half = subsample(&m, &SamplingSpec::Fraction { fraction: 0.5, seed: 42 })?;
    println!("50% per subset: {} records", half.len());

    let spec = SamplingSpec::Ratio { real: 1, fake: 2, total: 60, seed: 42 };
    let drawn = rebalance(&m, &spec)?;
    let fakes = drawn.records.iter().filter(|r| r.target == 1).count();
    println!("1:2 rebalance to 60: {} real, {fakes} fake", drawn.len() - fakes);
    Ok(())
}
