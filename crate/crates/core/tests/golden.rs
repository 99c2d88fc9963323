use std::path::{Path, PathBuf};

use fairface::features::read_features;
use fairface::manifest::{group_index, load_manifest, Attribute, GroupingSpec};
use fairface::metrics::{evaluate, load_predictions, EvalConfig};
use fairface::report::{read_report, render, Format};
use fairface::synthetic::{write_fixture, FixtureSpec};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/faces")
}

#[test]
fn fixture_report_matches_golden_file() {
    let fx = fixture();
    let m = load_manifest(fx.join("manifest.csv")).unwrap();
    let preds = load_predictions(fx.join("predictions.csv")).unwrap();
    let fm = read_features(fx.join("features.ffb")).unwrap();
    let report = evaluate(&preds, &m, Some(&fm), &EvalConfig::default()).unwrap();
    let golden = std::fs::read_to_string(fx.join("golden_report.json")).unwrap();
    assert_eq!(render(&report, Format::Json), golden);
}

/// Spot-checks golden values against direct counting over the fixture.
#[test]
fn golden_values_agree_with_counting() {
    let fx = fixture();
    let m = load_manifest(fx.join("manifest.csv")).unwrap();
    let preds = load_predictions(fx.join("predictions.csv")).unwrap();
    let golden = read_report(fx.join("golden_report.json")).unwrap();
    let score = |i: usize| preds[i].1;
    let y = |i: usize| m.records[i].target;
    let n = m.len();

    // AUC over all (fake, real) pairs
    let mut num = 0.0;
    let mut den = 0.0;
    for i in (0..n).filter(|&i| y(i) == 1) {
        for j in (0..n).filter(|&j| y(j) == 0) {
            den += 1.0;
            num += if score(i) > score(j) { 1.0 } else if score(i) == score(j) { 0.5 } else { 0.0 };
        }
    }
    let auc = golden.overall.utility.auc.unwrap();
    assert!((auc - num / den).abs() < 5e-7, "{auc} vs {}", num / den);

    // gender demographic parity
    let spec = GroupingSpec::new(Attribute::Gender);
    let rate = |g: usize| {
        let members: Vec<usize> = (0..n).filter(|&i| group_index(&m.records[i], &spec) == Some(g)).collect();
        members.iter().filter(|&&i| score(i) >= 0.5).count() as f64 / members.len() as f64
    };
    let dp = (rate(0) - rate(1)).abs();
    let stored = golden.overall.fairness["Gender"].f_dp.unwrap();
    assert!((stored - dp).abs() <= 5e-7 * dp.max(1e-3), "{stored} vs {dp}");
}

#[test]
fn fixture_generator_reproduces_the_bundled_files() {
    let dir = tempfile::tempdir().unwrap();
    let layout = write_fixture(dir.path(), &FixtureSpec::default()).unwrap();
    let fx = fixture();
    for name in ["manifest.csv", "predictions.csv", "features.ffb"] {
        assert_eq!(
            std::fs::read(layout.root.join(name)).unwrap(),
            std::fs::read(fx.join(name)).unwrap(),
            "{name}"
        );
    }
    let a = image::open(layout.root.join("images/img0042.png")).unwrap();
    let b = image::open(fx.join("images/img0042.png")).unwrap();
    assert_eq!(a.to_rgb8(), b.to_rgb8());
}
