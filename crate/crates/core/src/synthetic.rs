//! Seeded synthetic data: feature sets for annotator experiments and small
//! image datasets for exercising the full pipeline without real faces.

use std::path::{Path, PathBuf};

use image::RgbImage;
use ndarray::Array2;
use thiserror::Error;

use crate::features::{write_features, FeatureError, FeatureMatrix};
use crate::manifest::{write_manifest, Age, Category, Gender, Manifest, ManifestError, SampleRecord};
use crate::metrics::{write_predictions, MetricsError};
use crate::perturb::{HighFrequencyScorer, ImageScorer};
use crate::rng::SplitMix64;
use crate::skintone::{LandmarkSet, Rgb, TonePalette};

/// Two Gaussian classes in `d` dimensions with unit variance, separated by
/// `separation` along the first axis, plus a binary sensitive attribute
/// that shifts the second axis by `attr_shift`.
#[derive(Debug, Clone)]
pub struct GaussianSet {
    pub x: Array2<f64>,
    pub labels: Vec<usize>,
    pub attrs: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianSpec {
    pub n: usize,
    pub d: usize,
    /// Majority : minority size ratio; class 0 is the majority.
    pub imbalance: usize,
    pub separation: f64,
    /// Probability of attribute value 1.
    pub attr_rate: f64,
    pub attr_shift: f64,
    pub seed: u64,
}

impl Default for GaussianSpec {
    fn default() -> Self {
        Self {
            n: 5000,
            d: 16,
            imbalance: 10,
            separation: 4.0,
            attr_rate: 0.3,
            attr_shift: 1.0,
            seed: 0,
        }
    }
}

pub fn gaussian_set(spec: &GaussianSpec) -> GaussianSet {
    let mut rng = SplitMix64::new(spec.seed);
    let minority = spec.n / (spec.imbalance + 1);
    let mut labels: Vec<usize> = (0..spec.n).map(|i| usize::from(i < minority)).collect();
    rng.shuffle(&mut labels);
    let attrs: Vec<usize> = (0..spec.n)
        .map(|_| usize::from(rng.next_f64() < spec.attr_rate))
        .collect();
    let mut x = Array2::zeros((spec.n, spec.d));
    for i in 0..spec.n {
        for j in 0..spec.d {
            x[[i, j]] = rng.normal();
        }
        if labels[i] == 1 {
            x[[i, 0]] += spec.separation;
        }
        if spec.d > 1 && attrs[i] == 1 {
            x[[i, 1]] += spec.attr_shift;
        }
    }
    GaussianSet { x, labels, attrs }
}

/// Balanced accuracy and per-class recall of `pred` against `truth`.
pub fn balanced_accuracy(pred: &[usize], truth: &[usize], classes: usize) -> (f64, Vec<f64>) {
    let mut hit = vec![0usize; classes];
    let mut tot = vec![0usize; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        tot[t] += 1;
        if p == t {
            hit[t] += 1;
        }
    }
    let recall: Vec<f64> = hit
        .iter()
        .zip(&tot)
        .map(|(&h, &t)| if t == 0 { 0.0 } else { h as f64 / t as f64 })
        .collect();
    let present = tot.iter().filter(|&&t| t > 0).count().max(1);
    (recall.iter().sum::<f64>() / present as f64, recall)
}

// ---------------------------------------------------------------------------
// Image fixture
// ---------------------------------------------------------------------------

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("manifest: {0}")]
    Manifest(#[from] ManifestError),
    #[error("features: {0}")]
    Features(#[from] FeatureError),
    #[error("predictions: {0}")]
    Metrics(#[from] MetricsError),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

/// A small face-like image set. Every image is a skin-coloured ellipse with
/// darker eye and mouth patches on a flat grey background. Fakes carry a
/// checkerboard texture on the background whose strength varies per image;
/// reals carry sensor-like noise on the face that grows with skin tone, so
/// a high-frequency detector is both imperfect and biased.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixtureSpec {
    pub n: usize,
    pub size: u32,
    /// Share of fake images.
    pub fake_rate: f64,
    /// Feature dimension of the generated FFB1 file.
    pub feature_dim: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            n: 100,
            size: 64,
            fake_rate: 0.5,
            feature_dim: 16,
            seed: 7,
        }
    }
}

/// Paths of a written fixture, all inside one directory.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureLayout {
    pub root: PathBuf,
    pub manifest: PathBuf,
    pub images: PathBuf,
    pub regions: PathBuf,
    pub features: PathBuf,
    pub predictions: PathBuf,
}

impl FixtureLayout {
    pub fn at(root: &Path) -> Self {
        Self {
            root: root.to_path_buf(),
            manifest: root.join("manifest.csv"),
            images: root.join("images"),
            regions: root.join("regions"),
            features: root.join("features.ffb"),
            predictions: root.join("predictions.csv"),
        }
    }
}

const FAKE_SUBSETS: [(&str, Category); 2] = [("gan", Category::Gan), ("diffusion", Category::Dm)];

fn face_outline(w: f64, h: f64) -> Vec<[f64; 2]> {
    let (cx, cy, rx, ry) = (w / 2.0, h / 2.0, 0.32 * w, 0.42 * h);
    (0..24)
        .map(|i| {
            let t = i as f64 * std::f64::consts::TAU / 24.0;
            [cx + rx * t.cos(), cy + ry * t.sin()]
        })
        .collect()
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<[f64; 2]> {
    vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
}

fn feature_patches(w: f64, h: f64) -> Vec<Vec<[f64; 2]>> {
    vec![
        rect(0.34 * w, 0.36 * h, 0.44 * w, 0.42 * h),
        rect(0.56 * w, 0.36 * h, 0.66 * w, 0.42 * h),
        rect(0.40 * w, 0.64 * h, 0.60 * w, 0.70 * h),
    ]
}

fn inside(poly: &[[f64; 2]], x: f64, y: f64) -> bool {
    let mut hit = false;
    let n = poly.len();
    for i in 0..n {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % n];
        if (y0 > y) != (y1 > y) && x < x0 + (y - y0) * (x1 - x0) / (y1 - y0) {
            hit = !hit;
        }
    }
    hit
}

fn clip(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

fn render_face(size: u32, skin: Rgb, tone: u8, fake: bool, rng: &mut SplitMix64) -> (RgbImage, LandmarkSet) {
    let (w, h) = (size as f64, size as f64);
    let landmarks = LandmarkSet {
        face: face_outline(w, h),
        exclusions: feature_patches(w, h),
        width: size,
        height: size,
    };
    let face_noise = if fake { 1.0 } else { 0.5 + 0.6 * tone as f64 + rng.uniform(0.0, 1.0) };
    let texture = if fake { rng.uniform(0.2, 3.0) } else { 0.0 };
    // grey background at the skin's luminance keeps the outline edge weak
    let lum = 0.299 * skin[0] as f64 + 0.587 * skin[1] as f64 + 0.114 * skin[2] as f64;
    let img = RgbImage::from_fn(size, size, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        if inside(&landmarks.face, px, py) {
            if landmarks.exclusions.iter().any(|p| inside(p, px, py)) {
                return image::Rgb(skin.map(|c| clip(0.7 * c as f64)));
            }
            let n = rng.uniform(-face_noise, face_noise);
            image::Rgb([clip(skin[0] as f64 + n), clip(skin[1] as f64 + n), clip(skin[2] as f64 + n)])
        } else {
            let checker = if (x + y) % 2 == 0 { texture } else { -texture };
            let v = lum + checker;
            image::Rgb([clip(v), clip(v), clip(v)])
        }
    });
    (img, landmarks)
}

/// Writes a manifest, PNG images, landmark files, an FFB1 feature file, and
/// detector scores (from [`HighFrequencyScorer`]) under `root`.
pub fn write_fixture(root: &Path, spec: &FixtureSpec) -> Result<FixtureLayout, FixtureError> {
    let layout = FixtureLayout::at(root);
    std::fs::create_dir_all(&layout.images)?;
    std::fs::create_dir_all(&layout.regions)?;
    let palette = TonePalette::monk();
    let scorer = HighFrequencyScorer::default();
    let mut rng = SplitMix64::new(spec.seed);
    let d = spec.feature_dim.max(8);
    let mut records = Vec::with_capacity(spec.n);
    let mut preds = Vec::with_capacity(spec.n);
    let mut data = Vec::with_capacity(spec.n * d);
    for i in 0..spec.n {
        let fake = rng.next_f64() < spec.fake_rate;
        let id = format!("img{i:04}");
        let mut r = if fake {
            let (subset, cat) = FAKE_SUBSETS[rng.below(2) as usize];
            let mut r = SampleRecord::new(&id, 1, subset);
            r.category = cat;
            r
        } else {
            SampleRecord::new(&id, 0, "real")
        };
        let tone = 1 + rng.below(10) as u8;
        let gender = Gender::ALL[rng.below(2) as usize];
        let age = Age::ALL[rng.below(5) as usize];
        r.image_path = format!("images/{id}.png");
        r.skin_tone = Some(tone);
        r.gender = Some(gender);
        r.age = Some(age);

        let (img, landmarks) = render_face(spec.size, palette.color(tone), tone, fake, &mut rng);
        img.save_with_format(root.join(&r.image_path), image::ImageFormat::Png)?;
        std::fs::write(
            layout.regions.join(format!("{id}.json")),
            serde_json::to_string(&landmarks)?,
        )?;
        preds.push((id.clone(), scorer.score(&img)));

        // features: gender on axis 0, age one-hot on axes 1..=5, tone on
        // axis 6, fakeness on axis 7, unit noise everywhere
        for j in 0..d {
            let mut v = 0.5 * rng.normal();
            match j {
                0 => v += if gender == Gender::Male { 1.5 } else { -1.5 },
                1..=5 if j - 1 == age.index() => v += 2.0,
                6 => v += (tone as f64 - 5.5) / 3.0,
                7 => v += if fake { 1.0 } else { -1.0 },
                _ => {}
            }
            data.push(v as f32);
        }
        records.push(r);
    }
    let ids = records.iter().map(|r| r.sample_id.clone()).collect();
    write_manifest(&Manifest::new(records), &layout.manifest)?;
    write_features(&FeatureMatrix::new(ids, d, data)?, &layout.features)?;
    write_predictions(&preds, &layout.predictions)?;
    Ok(layout)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::load_manifest;
    use crate::metrics::{auc, load_predictions};

    #[test]
    fn fixture_is_complete_and_scores_separate() {
        let dir = tempfile::tempdir().unwrap();
        let layout = write_fixture(dir.path(), &FixtureSpec::default()).unwrap();
        let m = load_manifest(&layout.manifest).unwrap();
        m.validate().unwrap();
        assert_eq!(m.len(), 100);
        let preds = load_predictions(&layout.predictions).unwrap();
        let labels: Vec<u8> = m.records.iter().map(|r| r.target).collect();
        let scores: Vec<f64> = preds.iter().map(|p| p.1).collect();
        let a = auc(&scores, &labels).unwrap();
        assert!(a > 0.75 && a < 1.0, "auc {a}");
        let fm = crate::features::read_features(&layout.features).unwrap();
        assert_eq!(fm.ids, m.records.iter().map(|r| r.sample_id.clone()).collect::<Vec<_>>());
        assert!(layout.regions.join("img0000.json").exists());
    }
}
