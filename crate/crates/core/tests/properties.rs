use std::collections::HashSet;

use fairface::annotator::mlp::argmax;
use fairface::annotator::sinkhorn::sinkhorn_cost;
use fairface::annotator::SinkhornConfig;
use fairface::manifest::{
    assign_split, group_of, rebalance, subsample, Age, Attribute, Gender, GroupingSpec, Manifest,
    SampleRecord, SamplingSpec, Split, StrataField,
};
use fairface::metrics::{auc, f_dp, f_eo, f_ind, f_meo, f_oae, IndFairnessConfig, PredictionSet};
use fairface::perturb::{apply, Transform};
use fairface::report::{radar_data, render, subgroup_bars, Format};
use fairface::skintone::{estimate_tone, kmeans_colors, map_to_mst, KMeansConfig, SkinMask, SkinRegion, TonePalette};
use image::{Rgb, RgbImage};
use ndarray::{Array1, Array2};
use proptest::prelude::*;

// ---------------------------------------------------------------------------
// Strategies
// ---------------------------------------------------------------------------

fn record_strategy() -> impl Strategy<Value = (u8, u8, Option<u8>, Option<u8>, Option<u8>)> {
    (
        0u8..2,
        0u8..3,
        proptest::option::of(1u8..=10),
        proptest::option::of(0u8..2),
        proptest::option::of(0u8..5),
    )
}

fn manifest_strategy(max: usize) -> impl Strategy<Value = Manifest> {
    prop::collection::vec(record_strategy(), 1..max).prop_map(|rows| {
        let records = rows
            .into_iter()
            .enumerate()
            .map(|(i, (target, subset, tone, gender, age))| {
                let mut r = SampleRecord::new(&format!("s{i}"), target, ["a", "b", "c"][subset as usize]);
                r.skin_tone = tone;
                r.gender = gender.map(|g| Gender::ALL[g as usize]);
                r.age = age.map(|a| Age::ALL[a as usize]);
                r
            })
            .collect();
        Manifest::new(records)
    })
}

/// Scores on a coarse grid so ties are common.
fn prediction_strategy(max: usize, groups: usize) -> impl Strategy<Value = (Vec<f64>, Vec<u8>, Vec<Option<usize>>)> {
    prop::collection::vec((0u8..11, 0u8..2, proptest::option::weighted(0.9, 0..groups)), 2..max).prop_map(|rows| {
        let scores = rows.iter().map(|r| r.0 as f64 / 10.0).collect();
        let labels = rows.iter().map(|r| r.1).collect();
        let groups = rows.iter().map(|r| r.2).collect();
        (scores, labels, groups)
    })
}

fn ids(m: &Manifest) -> HashSet<String> {
    m.records.iter().map(|r| r.sample_id.clone()).collect()
}

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_partitions_the_input(m in manifest_strategy(80), frac in 0.05f64..0.95, seed: u64) {
        let strata = [StrataField::Subset, StrataField::Group(Attribute::Gender)];
        let a = assign_split(&m, frac, &strata, seed).unwrap();
        let train: HashSet<_> = a.records.iter().filter(|r| r.split == Split::Train).map(|r| &r.sample_id).collect();
        let test: HashSet<_> = a.records.iter().filter(|r| r.split == Split::Test).map(|r| &r.sample_id).collect();
        prop_assert!(train.is_disjoint(&test));
        prop_assert_eq!(train.len() + test.len(), m.len());
        prop_assert_eq!(ids(&a), ids(&m));
        prop_assert_eq!(a, assign_split(&m, frac, &strata, seed).unwrap());
    }

    #[test]
    fn sampling_never_fabricates(m in manifest_strategy(80), frac in 0.05f64..=1.0, total in 1usize..40, seed: u64) {
        let all = ids(&m);
        let s = subsample(&m, &SamplingSpec::Fraction { fraction: frac, seed }).unwrap();
        prop_assert!(ids(&s).is_subset(&all));
        prop_assert_eq!(&s, &subsample(&m, &SamplingSpec::Fraction { fraction: frac, seed }).unwrap());
        let spec = SamplingSpec::Ratio { real: 1, fake: 1, total, seed };
        if let Ok(r) = rebalance(&m, &spec) {
            prop_assert!(ids(&r).is_subset(&all));
            prop_assert_eq!(r, rebalance(&m, &spec).unwrap());
        }
    }

    #[test]
    fn intersection_partitions_annotated_records(m in manifest_strategy(80)) {
        let spec = GroupingSpec::new(Attribute::Intersection);
        let labels: HashSet<&str> = spec.groups().iter().copied().collect();
        prop_assert_eq!(labels.len(), 6);
        for r in &m.records {
            let both = r.gender.is_some() && r.skin_tone.is_some();
            match group_of(r, &spec) {
                Some(g) => prop_assert!(both && labels.contains(g)),
                None => prop_assert!(!both),
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Skin tone
// ---------------------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn kmeans_ignores_pixel_order_and_conserves_counts(
        pixels in prop::collection::vec(any::<[u8; 3]>(), 3..200),
        perm_seed: u64,
        seed: u64,
    ) {
        let cfg = KMeansConfig::default();
        let a = kmeans_colors(&pixels, &cfg, seed).unwrap();
        let total: usize = a.iter().map(|c| c.size).sum();
        prop_assert_eq!(total, pixels.len());
        let mut shuffled = pixels.clone();
        fairface::rng::SplitMix64::new(perm_seed).shuffle(&mut shuffled);
        prop_assert_eq!(a, kmeans_colors(&shuffled, &cfg, seed).unwrap());
    }

    #[test]
    fn tone_estimation_is_deterministic(w in 4u32..20, h in 4u32..20, seed: u64, px_seed: u64) {
        let mut rng = fairface::rng::SplitMix64::new(px_seed);
        let img = RgbImage::from_fn(w, h, |_, _| Rgb([rng.below(256) as u8, rng.below(256) as u8, rng.below(256) as u8]));
        let region = SkinRegion::Mask(SkinMask::full(w, h));
        let p = TonePalette::monk();
        let cfg = KMeansConfig::default();
        prop_assert_eq!(
            estimate_tone(&img, &region, &p, &cfg, seed).unwrap(),
            estimate_tone(&img, &region, &p, &cfg, seed).unwrap()
        );
    }
}

#[test]
fn palette_colours_map_to_themselves() {
    let p = TonePalette::monk();
    for t in 1..=10u8 {
        let c = p.color(t);
        assert_eq!(map_to_mst([c[0] as f64, c[1] as f64, c[2] as f64], &p), t);
    }
}

// ---------------------------------------------------------------------------
// Annotator
// ---------------------------------------------------------------------------

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn argmax_ignores_a_constant_shift(row in prop::collection::vec(-50.0f64..50.0, 1..8), c in -1e3f64..1e3) {
        let a = Array1::from(row.clone());
        let b = Array1::from(row.iter().map(|v| v + c).collect::<Vec<_>>());
        // shifting can merge near-ties through rounding; only compare when the winner is clear
        let mut sorted = row.clone();
        sorted.sort_by(|x, y| y.total_cmp(x));
        if sorted.len() < 2 || sorted[0] - sorted[1] > 1e-9 * (1.0 + c.abs()) {
            prop_assert_eq!(argmax(a.view()), argmax(b.view()));
        }
    }

    #[test]
    fn sinkhorn_is_nonnegative_monotone_and_feasible(
        n in 1usize..6,
        m in 1usize..6,
        vals in prop::collection::vec(0.0f64..4.0, 36),
        alpha in 1e-3f64..1.0,
    ) {
        let cost = Array2::from_shape_fn((n, m), |(i, j)| vals[i * 6 + j]);
        let cfg = SinkhornConfig { alpha, max_iter: 2000, tol: 1e-9, trace: true, ..SinkhornConfig::default() };
        let st = sinkhorn_cost(cost, &cfg);
        prop_assert!(st.objective >= -1e-12);
        for w in st.primal_trace.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        if st.converged {
            prop_assert!(st.marginal_error <= cfg.tol);
        }
    }
}

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

fn relabel(groups: &[Option<usize>], perm: &[usize]) -> Vec<Option<usize>> {
    groups.iter().map(|g| g.map(|g| perm[g])).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn group_metrics_are_bounded_and_symmetric(
        (scores, labels, groups) in prediction_strategy(64, 4),
        order_seed: u64,
    ) {
        let p = PredictionSet::from_scores(scores.clone(), labels.clone(), 0.5);
        let k = 4.0;
        let perm = [2usize, 0, 3, 1];
        let mut order: Vec<usize> = (0..scores.len()).collect();
        fairface::rng::SplitMix64::new(order_seed).shuffle(&mut order);
        let shuffled = p.select(&order);
        let sgroups: Vec<Option<usize>> = order.iter().map(|&i| groups[i]).collect();
        type Metric = fn(&PredictionSet, &[Option<usize>]) -> Result<fairface::metrics::Measured, fairface::metrics::MetricsError>;
        let metrics: [(&str, Metric, f64); 4] = [
            ("eo", f_eo, 2.0 * k),
            ("oae", f_oae, 1.0),
            ("dp", f_dp, 1.0),
            ("meo", f_meo, 1.0),
        ];
        for (name, f, bound) in metrics {
            let Ok(v) = f(&p, &groups) else { continue };
            prop_assert!(v.value >= 0.0 && v.value <= bound + 1e-12, "{} = {}", name, v.value);
            let relabelled = f(&p, &relabel(&groups, &perm)).unwrap().value;
            prop_assert!((relabelled - v.value).abs() < 1e-12, "{} relabel", name);
            let reordered = f(&shuffled, &sgroups).unwrap().value;
            prop_assert!((reordered - v.value).abs() < 1e-12, "{} reorder", name);
        }
    }

    #[test]
    fn identical_groups_have_zero_disparity(
        base in prop::collection::vec((0u8..11, 0u8..2), 1..16),
        copies in 2usize..5,
    ) {
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        let mut groups = Vec::new();
        for g in 0..copies {
            for &(s, y) in &base {
                scores.push(s as f64 / 10.0);
                labels.push(y);
                groups.push(Some(g));
            }
        }
        let p = PredictionSet::from_scores(scores, labels, 0.5);
        for f in [f_eo, f_oae, f_dp, f_meo] {
            if let Ok(v) = f(&p, &groups) {
                prop_assert!(v.value.abs() < 1e-12);
            }
        }
    }

    #[test]
    fn auc_survives_monotone_transforms((scores, labels, _) in prediction_strategy(200, 2)) {
        let a = auc(&scores, &labels);
        let squashed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() / (1.0 + (3.0 * s).exp())).collect();
        let b = auc(&squashed, &labels);
        prop_assert_eq!(a.is_some(), b.is_some());
        if let (Some(a), Some(b)) = (a, b) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn exact_individual_fairness_ignores_order(
        rows in prop::collection::vec((0.0f64..1.0, prop::array::uniform3(-1.0f64..1.0)), 2..30),
        order_seed: u64,
    ) {
        let mut p = PredictionSet::from_scores(rows.iter().map(|r| r.0).collect(), vec![0; rows.len()], 0.5);
        p.reps = Some(rows.iter().map(|r| r.1.to_vec()).collect());
        let cfg = IndFairnessConfig::default();
        let a = f_ind(&p, &cfg).unwrap();
        let mut order: Vec<usize> = (0..rows.len()).collect();
        fairface::rng::SplitMix64::new(order_seed).shuffle(&mut order);
        let b = f_ind(&p.select(&order), &cfg).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn demographic_parity_gap_is_the_same_for_both_classes() {
    // the q=0 and q=1 rate gaps are complements, so either one gives F_DP
    let p = PredictionSet::from_scores(vec![0.9, 0.1, 0.8, 0.7, 0.2, 0.3], vec![1, 0, 1, 0, 0, 1], 0.5);
    let groups = [Some(0), Some(0), Some(0), Some(1), Some(1), Some(1)];
    let v = f_dp(&p, &groups).unwrap().value;
    assert!((v - (2.0 / 3.0 - 1.0 / 3.0)).abs() < 1e-12);
}

// ---------------------------------------------------------------------------
// Perturbations
// ---------------------------------------------------------------------------

fn smooth_image(w: u32, h: u32, phase: f64) -> RgbImage {
    RgbImage::from_fn(w, h, |x, y| {
        let v = |f: f64| (127.5 + 100.0 * ((x as f64 * f + y as f64 * 0.07 + phase).sin())) as u8;
        Rgb([v(0.05), v(0.08), v(0.11)])
    })
}

fn psnr(a: &RgbImage, b: &RgbImage) -> f64 {
    let mse: f64 = a
        .as_raw()
        .iter()
        .zip(b.as_raw())
        .map(|(&x, &y)| (x as f64 - y as f64).powi(2))
        .sum::<f64>()
        / a.as_raw().len() as f64;
    10.0 * (255.0f64 * 255.0 / mse.max(1e-12)).log10()
}

fn max_channel_diff(a: &RgbImage, b: &RgbImage) -> u8 {
    a.as_raw().iter().zip(b.as_raw()).map(|(&x, &y)| x.abs_diff(y)).max().unwrap_or(0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn transforms_are_pure(w in 8u32..40, h in 8u32..40, seed: u64, which in 0usize..6) {
        let img = smooth_image(w, h, seed as f64 * 1e-3);
        let t = Transform::suite()[which];
        let t = match t {
            Transform::RandomCrop { .. } => Transform::RandomCrop { size: 6, resize_short: 8 },
            other => other,
        };
        prop_assert_eq!(apply(&img, &t, seed).unwrap(), apply(&img, &t, seed).unwrap());
    }

    #[test]
    fn zero_limits_are_identities(w in 4u32..40, h in 4u32..40, seed: u64) {
        let mut rng = fairface::rng::SplitMix64::new(seed);
        let img = RgbImage::from_fn(w, h, |_, _| Rgb([rng.below(256) as u8, rng.below(256) as u8, rng.below(256) as u8]));
        let hsv = Transform::Hsv { hue_limit: 0.0, sat_limit: 0.0, val_limit: 0.0 };
        let bc = Transform::BrightnessContrast { brightness_limit: 0.0, contrast_limit: 0.0 };
        prop_assert_eq!(&apply(&img, &hsv, seed).unwrap(), &img);
        prop_assert_eq!(&apply(&img, &bc, seed).unwrap(), &img);
        let rot = apply(&img, &Transform::Rotation { limit_deg: 0.0 }, seed).unwrap();
        prop_assert!(max_channel_diff(&rot, &img) <= 1);
    }
}

#[test]
fn crop_of_an_exact_size_image_keeps_geometry() {
    let img = smooth_image(244, 244, 0.3);
    let t = Transform::RandomCrop { size: 244, resize_short: 244 };
    assert!(max_channel_diff(&apply(&img, &t, 5).unwrap(), &img) <= 1);
}

#[test]
fn jpeg_at_full_quality_is_near_lossless() {
    for phase in [0.0, 1.0, 2.0] {
        let img = smooth_image(96, 64, phase);
        let out = apply(&img, &Transform::Jpeg { quality: 100 }, 0).unwrap();
        let q = psnr(&img, &out);
        assert!(q >= 45.0, "psnr {q}");
    }
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

#[test]
fn rendering_is_deterministic_and_projections_are_faithful() {
    let golden = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/faces/golden_report.json");
    let report = fairface::report::read_report(golden).unwrap();
    for f in [Format::Json, Format::Markdown, Format::TableText] {
        assert_eq!(render(&report, f), render(&report, f));
    }
    for p in radar_data(&report).unwrap() {
        let b = &report.subsets[&p.subset];
        assert_eq!(p.auc, b.utility.auc.map(|v| 100.0 * v));
        assert_eq!(p.f_eo, b.fairness["Intersection"].f_eo.map(|v| 100.0 * v));
    }
    let bars = subgroup_bars(&report).unwrap();
    let groups = &report.overall.subgroups["Intersection"];
    for (g, v) in &bars.bars {
        assert_eq!(*v, groups.get(g).and_then(|s| s.utility.fpr).map(|f| 100.0 * f));
    }
}
