//! Skin tone estimation on the Monk Skin Tone scale.
//!
//! Pipeline: skin mask (from landmark polygons or a mask image) -> masked
//! pixels -> k-means over RGB -> largest cluster -> nearest palette colour.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::manifest::Manifest;
use crate::rng::{sample_seed, SplitMix64};

#[derive(Debug, Error)]
pub enum SkinToneError {
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error("invalid landmarks: {0}")]
    InvalidLandmarks(String),
    #[error("too few pixels: have {have}, need at least {need}")]
    TooFewPixels { have: usize, need: usize },
    #[error("invalid palette: {0}")]
    Palette(String),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("mask is {mask_w}x{mask_h} but image is {img_w}x{img_h}")]
    SizeMismatch {
        mask_w: u32,
        mask_h: u32,
        img_w: u32,
        img_h: u32,
    },
}

pub type Rgb = [u8; 3];

/// Landmark polygons for one face, in pixel coordinates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub face: Vec<[f64; 2]>,
    #[serde(default)]
    pub exclusions: Vec<Vec<[f64; 2]>>,
    pub width: u32,
    pub height: u32,
}

impl LandmarkSet {
    pub fn from_json(text: &str) -> Result<Self, SkinToneError> {
        serde_json::from_str(text).map_err(|e| SkinToneError::InvalidLandmarks(e.to_string()))
    }

    fn validate(&self) -> Result<(), SkinToneError> {
        let (w, h) = (self.width as f64, self.height as f64);
        for poly in std::iter::once(&self.face).chain(&self.exclusions) {
            if poly.len() < 3 {
                return Err(SkinToneError::DegeneratePolygon(format!(
                    "{} vertices",
                    poly.len()
                )));
            }
            for &[x, y] in poly {
                if !(0.0..=w).contains(&x) || !(0.0..=h).contains(&y) {
                    return Err(SkinToneError::InvalidLandmarks(format!(
                        "vertex ({x}, {y}) outside {w}x{h}"
                    )));
                }
            }
        }
        if polygon_area(&self.face).abs() == 0.0 {
            return Err(SkinToneError::DegeneratePolygon("face outline has zero area".into()));
        }
        Ok(())
    }
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let [x0, y0] = poly[i];
            let [x1, y1] = poly[(i + 1) % n];
            x0 * y1 - x1 * y0
        })
        .sum::<f64>()
        / 2.0
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkinMask {
    pub width: u32,
    pub height: u32,
    bits: Vec<bool>,
}

impl SkinMask {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    pub fn full(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            bits: vec![true; width as usize * height as usize],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, on: bool) {
        self.bits[y as usize * self.width as usize + x as usize] = on;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// Single-channel mask image; any nonzero luma counts as skin.
    pub fn from_image(img: &image::DynamicImage) -> Self {
        let g = img.to_luma8();
        Self {
            width: g.width(),
            height: g.height(),
            bits: g.pixels().map(|p| p.0[0] != 0).collect(),
        }
    }

    pub fn load(path: &Path) -> Result<Self, SkinToneError> {
        Ok(Self::from_image(&image::open(path)?))
    }
}

/// Even-odd scanline fill at pixel centres of one polygon into `mask`,
/// toggling (`on = false` clears) the covered pixels.
fn fill_polygon(mask: &mut SkinMask, poly: &[[f64; 2]], on: bool) {
    let n = poly.len();
    let mut xs = Vec::new();
    for y in 0..mask.height {
        let yc = y as f64 + 0.5;
        xs.clear();
        for i in 0..n {
            let [x0, y0] = poly[i];
            let [x1, y1] = poly[(i + 1) % n];
            // half-open rule so shared vertices are counted once
            if (y0 <= yc) != (y1 <= yc) {
                xs.push(x0 + (yc - y0) * (x1 - x0) / (y1 - y0));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            // pixel x is inside when its centre x+0.5 lies in [a, b)
            let start = (pair[0] - 0.5).ceil().max(0.0) as i64;
            let end = (pair[1] - 0.5).ceil().min(mask.width as f64) as i64;
            for x in start..end {
                mask.set(x as u32, y, on);
            }
        }
    }
}

/// Pixels inside the face outline and outside every exclusion polygon.
pub fn rasterize_mask(l: &LandmarkSet) -> Result<SkinMask, SkinToneError> {
    l.validate()?;
    let mut mask = SkinMask::new(l.width, l.height);
    fill_polygon(&mut mask, &l.face, true);
    for ex in &l.exclusions {
        fill_polygon(&mut mask, ex, false);
    }
    Ok(mask)
}

/// Ten reference colours, tone 1 (lightest) at index 0.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TonePalette {
    colors: [Rgb; 10],
}

pub const MONK_PALETTE_TOML: &str = include_str!("../data/monk_palette.toml");

impl TonePalette {
    pub fn new(colors: [Rgb; 10]) -> Self {
        Self { colors }
    }

    /// The published Monk Skin Tone swatches (see `data/monk_palette.toml`).
    pub fn monk() -> Self {
        Self::from_toml(MONK_PALETTE_TOML).expect("bundled palette parses")
    }

    pub fn color(&self, tone: u8) -> Rgb {
        self.colors[tone as usize - 1]
    }

    pub fn colors(&self) -> &[Rgb; 10] {
        &self.colors
    }

    /// Parses a `[tones]` table mapping `1..=10` to `"#rrggbb"` strings.
    pub fn from_toml(text: &str) -> Result<Self, SkinToneError> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct File {
            tones: BTreeMap<String, String>,
        }
        let file: File =
            toml::from_str(text).map_err(|e| SkinToneError::Palette(e.to_string()))?;
        if file.tones.len() != 10 {
            return Err(SkinToneError::Palette(format!(
                "expected 10 tones, found {}",
                file.tones.len()
            )));
        }
        let mut colors = [[0u8; 3]; 10];
        let mut filled = [false; 10];
        for (k, v) in &file.tones {
            let idx: usize = k
                .parse()
                .ok()
                .filter(|i| (1..=10).contains(i))
                .ok_or_else(|| SkinToneError::Palette(format!("bad tone index `{k}`")))?;
            colors[idx - 1] = parse_hex(v)?;
            filled[idx - 1] = true;
        }
        if filled.iter().any(|f| !f) {
            return Err(SkinToneError::Palette("tone indices must be 1..=10".into()));
        }
        Ok(Self { colors })
    }

    pub fn load(path: &Path) -> Result<Self, SkinToneError> {
        let text = std::fs::read_to_string(path).map_err(|source| SkinToneError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml(&text)
    }
}

fn parse_hex(s: &str) -> Result<Rgb, SkinToneError> {
    let h = s.trim_start_matches('#');
    let bad = || SkinToneError::Palette(format!("bad colour `{s}`"));
    if h.len() != 6 {
        return Err(bad());
    }
    let c = |i: usize| u8::from_str_radix(&h[i..i + 2], 16).map_err(|_| bad());
    Ok([c(0)?, c(2)?, c(4)?])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KMeansConfig {
    pub k: usize,
    pub max_iter: usize,
    /// Stop once no centroid moves further than this (RGB units).
    pub tol: f64,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            k: 3,
            max_iter: 100,
            tol: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColorCluster {
    pub centroid: [f64; 3],
    pub size: usize,
}

fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)
}

fn to_f(c: Rgb) -> [f64; 3] {
    [c[0] as f64, c[1] as f64, c[2] as f64]
}

/// Lloyd's k-means over RGB pixels with k-means++ seeding.
///
/// Work happens on the sorted set of distinct colours weighted by their
/// pixel counts, so the result does not depend on pixel order.
pub fn kmeans_colors(
    pixels: &[Rgb],
    cfg: &KMeansConfig,
    seed: u64,
) -> Result<Vec<ColorCluster>, SkinToneError> {
    let k = cfg.k.max(1);
    if pixels.len() < k {
        return Err(SkinToneError::TooFewPixels {
            have: pixels.len(),
            need: k,
        });
    }
    let mut hist: BTreeMap<Rgb, usize> = BTreeMap::new();
    for &p in pixels {
        *hist.entry(p).or_default() += 1;
    }
    let colors: Vec<[f64; 3]> = hist.keys().map(|&c| to_f(c)).collect();
    let weights: Vec<usize> = hist.values().copied().collect();
    let m = colors.len();

    let mut rng = SplitMix64::new(seed);
    let mut centroids = Vec::with_capacity(k);
    centroids.push(colors[weighted_pick(&mut rng, &weights.iter().map(|&w| w as f64).collect::<Vec<_>>())]);
    let mut nearest: Vec<f64> = colors.iter().map(|c| dist2(c, &centroids[0])).collect();
    while centroids.len() < k {
        let score: Vec<f64> = (0..m).map(|i| weights[i] as f64 * nearest[i]).collect();
        let next = if score.iter().sum::<f64>() > 0.0 {
            colors[weighted_pick(&mut rng, &score)]
        } else {
            centroids[0]
        };
        for i in 0..m {
            nearest[i] = nearest[i].min(dist2(&colors[i], &next));
        }
        centroids.push(next);
    }

    let mut assign = vec![0usize; m];
    let mut sizes = vec![0usize; k];
    for _ in 0..cfg.max_iter.max(1) {
        assign_nearest(&colors, &centroids, &mut assign);
        let mut sums = vec![[0.0f64; 3]; k];
        sizes.iter_mut().for_each(|s| *s = 0);
        for i in 0..m {
            let c = assign[i];
            let w = weights[i] as f64;
            for ch in 0..3 {
                sums[c][ch] += w * colors[i][ch];
            }
            sizes[c] += weights[i];
        }
        let mut next: Vec<[f64; 3]> = (0..k)
            .map(|c| {
                if sizes[c] > 0 {
                    let n = sizes[c] as f64;
                    [sums[c][0] / n, sums[c][1] / n, sums[c][2] / n]
                } else {
                    centroids[c]
                }
            })
            .collect();
        // empty clusters jump to the colour farthest from its own centroid
        let mut taken = vec![false; m];
        for c in 0..k {
            if sizes[c] > 0 {
                continue;
            }
            let far = (0..m)
                .filter(|&i| !taken[i])
                .map(|i| (i, dist2(&colors[i], &next[assign[i]])))
                .fold(None::<(usize, f64)>, |best, (i, d)| match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((i, d)),
                });
            if let Some((i, _)) = far {
                taken[i] = true;
                next[c] = colors[i];
            }
        }
        let shift = centroids
            .iter()
            .zip(&next)
            .map(|(a, b)| dist2(a, b).sqrt())
            .fold(0.0, f64::max);
        centroids = next;
        if shift < cfg.tol {
            break;
        }
    }
    // final assignment so sizes match the returned centroids
    assign_nearest(&colors, &centroids, &mut assign);
    sizes.iter_mut().for_each(|s| *s = 0);
    for i in 0..m {
        sizes[assign[i]] += weights[i];
    }
    Ok(centroids
        .into_iter()
        .zip(sizes)
        .map(|(centroid, size)| ColorCluster { centroid, size })
        .collect())
}

fn assign_nearest(colors: &[[f64; 3]], centroids: &[[f64; 3]], assign: &mut [usize]) {
    for (i, c) in colors.iter().enumerate() {
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for (j, z) in centroids.iter().enumerate() {
            let d = dist2(c, z);
            if d < bd {
                bd = d;
                best = j;
            }
        }
        assign[i] = best;
    }
}

fn weighted_pick(rng: &mut SplitMix64, w: &[f64]) -> usize {
    let total: f64 = w.iter().sum();
    let target = rng.next_f64() * total;
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &x) in w.iter().enumerate() {
        if x <= 0.0 {
            continue;
        }
        acc += x;
        last = i;
        if target < acc {
            return i;
        }
    }
    last
}

/// Nearest palette tone by Euclidean RGB distance; ties go to the lower tone.
pub fn map_to_mst(rgb: [f64; 3], palette: &TonePalette) -> u8 {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for (i, &c) in palette.colors.iter().enumerate() {
        let d = dist2(&rgb, &to_f(c));
        if d < bd {
            bd = d;
            best = i;
        }
    }
    best as u8 + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToneEstimate {
    pub tone: u8,
    pub dominant_rgb: Rgb,
    /// Share of masked pixels in the winning cluster.
    pub cluster_share: f64,
    pub pixel_count: usize,
}

/// Where the skin pixels come from.
#[derive(Debug, Clone)]
pub enum SkinRegion {
    Landmarks(LandmarkSet),
    Mask(SkinMask),
}

fn luminance(c: &[f64; 3]) -> f64 {
    0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2]
}

pub fn estimate_tone(
    image: &RgbImage,
    region: &SkinRegion,
    palette: &TonePalette,
    cfg: &KMeansConfig,
    seed: u64,
) -> Result<ToneEstimate, SkinToneError> {
    let owned;
    let mask = match region {
        SkinRegion::Landmarks(l) => {
            owned = rasterize_mask(l)?;
            &owned
        }
        SkinRegion::Mask(m) => m,
    };
    if (mask.width, mask.height) != image.dimensions() {
        return Err(SkinToneError::SizeMismatch {
            mask_w: mask.width,
            mask_h: mask.height,
            img_w: image.width(),
            img_h: image.height(),
        });
    }
    let pixels: Vec<Rgb> = image
        .enumerate_pixels()
        .filter(|(x, y, _)| mask.get(*x, *y))
        .map(|(_, _, p)| p.0)
        .collect();
    let clusters = kmeans_colors(&pixels, cfg, seed)?;
    // largest cluster; equal sizes resolved toward the brighter centroid
    let top = clusters
        .iter()
        .copied()
        .reduce(|best, c| {
            if c.size > best.size
                || (c.size == best.size && luminance(&c.centroid) > luminance(&best.centroid))
            {
                c
            } else {
                best
            }
        })
        .expect("k >= 1");
    let round = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    Ok(ToneEstimate {
        tone: map_to_mst(top.centroid, palette),
        dominant_rgb: [round(top.centroid[0]), round(top.centroid[1]), round(top.centroid[2])],
        cluster_share: top.size as f64 / pixels.len() as f64,
        pixel_count: pixels.len(),
    })
}

/// Locates the skin region for `sample_id` in `dir`: `<id>.json` landmarks
/// first, then a `<id>.png` mask.
pub fn find_region(dir: &Path, sample_id: &str) -> Result<SkinRegion, SkinToneError> {
    let json = dir.join(format!("{sample_id}.json"));
    if json.exists() {
        let text = std::fs::read_to_string(&json).map_err(|source| SkinToneError::Io {
            path: json.display().to_string(),
            source,
        })?;
        return Ok(SkinRegion::Landmarks(LandmarkSet::from_json(&text)?));
    }
    let png = dir.join(format!("{sample_id}.png"));
    if png.exists() {
        return Ok(SkinRegion::Mask(SkinMask::load(&png)?));
    }
    Err(SkinToneError::Io {
        path: json.display().to_string(),
        source: std::io::Error::new(std::io::ErrorKind::NotFound, "no landmark file or mask"),
    })
}

#[derive(Debug)]
pub struct ToneAnnotation {
    pub manifest: Manifest,
    pub estimates: Vec<(String, ToneEstimate)>,
    pub failures: Vec<(String, SkinToneError)>,
}

/// Estimates tones for every record and writes them into `skin_tone`.
/// Records whose estimation fails keep their previous value and are listed
/// in `failures`. Seeds are per sample, so results do not depend on
/// scheduling.
pub fn annotate_manifest(
    manifest: &Manifest,
    image_root: &Path,
    region_dir: &Path,
    palette: &TonePalette,
    cfg: &KMeansConfig,
    seed: u64,
) -> ToneAnnotation {
    let results: Vec<Result<ToneEstimate, SkinToneError>> = manifest
        .records
        .par_iter()
        .map(|r| {
            let path: PathBuf = image_root.join(&r.image_path);
            let img = image::open(&path)?.to_rgb8();
            let region = find_region(region_dir, &r.sample_id)?;
            estimate_tone(&img, &region, palette, cfg, sample_seed(seed, &r.sample_id))
        })
        .collect();
    let mut out = manifest.clone();
    let mut estimates = Vec::new();
    let mut failures = Vec::new();
    for (rec, res) in out.records.iter_mut().zip(results) {
        match res {
            Ok(est) => {
                rec.skin_tone = Some(est.tone);
                estimates.push((rec.sample_id.clone(), est));
            }
            Err(e) => failures.push((rec.sample_id.clone(), e)),
        }
    }
    ToneAnnotation {
        manifest: out,
        estimates,
        failures,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<[f64; 2]> {
        vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]
    }

    #[test]
    fn square_fills_and_annulus_subtracts() {
        let l = LandmarkSet {
            face: square(2.0, 2.0, 8.0, 8.0),
            exclusions: vec![],
            width: 10,
            height: 10,
        };
        let m = rasterize_mask(&l).unwrap();
        assert_eq!(m.count(), 36);
        assert!(m.get(2, 2) && m.get(7, 7) && !m.get(8, 8) && !m.get(1, 5));

        let l = LandmarkSet {
            exclusions: vec![square(4.0, 4.0, 6.0, 6.0)],
            ..l
        };
        let m = rasterize_mask(&l).unwrap();
        assert_eq!(m.count(), 32);
        assert!(!m.get(4, 4) && !m.get(5, 5) && m.get(3, 3));
    }

    #[test]
    fn degenerate_polygons_are_rejected() {
        let l = LandmarkSet {
            face: vec![[0.0, 0.0], [5.0, 5.0]],
            exclusions: vec![],
            width: 10,
            height: 10,
        };
        assert!(matches!(rasterize_mask(&l), Err(SkinToneError::DegeneratePolygon(_))));
        let flat = LandmarkSet {
            face: vec![[0.0, 0.0], [5.0, 5.0], [9.0, 9.0]],
            ..l.clone()
        };
        assert!(matches!(rasterize_mask(&flat), Err(SkinToneError::DegeneratePolygon(_))));
        let outside = LandmarkSet {
            face: square(0.0, 0.0, 11.0, 5.0),
            ..l
        };
        assert!(matches!(rasterize_mask(&outside), Err(SkinToneError::InvalidLandmarks(_))));
    }

    #[test]
    fn three_separated_colours_are_recovered() {
        let cols = [[200u8, 150, 120], [90, 60, 40], [30, 30, 30]];
        let pixels: Vec<Rgb> = (0..300).map(|i| cols[i % 3]).collect();
        let mut clusters = kmeans_colors(&pixels, &KMeansConfig::default(), 11).unwrap();
        clusters.sort_by(|a, b| b.centroid[0].total_cmp(&a.centroid[0]));
        for (c, want) in clusters.iter().zip(cols) {
            assert_eq!(c.size, 100);
            assert_eq!(c.centroid, to_f(want));
        }
    }

    #[test]
    fn identical_pixels_collapse_to_one_cluster() {
        let pixels = vec![[10u8, 20, 30]; 50];
        let clusters = kmeans_colors(&pixels, &KMeansConfig::default(), 1).unwrap();
        assert_eq!(clusters.len(), 3);
        let mut sizes: Vec<_> = clusters.iter().map(|c| c.size).collect();
        sizes.sort_unstable();
        assert_eq!(sizes, vec![0, 0, 50]);
    }

    #[test]
    fn too_few_pixels() {
        let pixels = vec![[0u8; 3]; 2];
        assert!(matches!(
            kmeans_colors(&pixels, &KMeansConfig::default(), 0),
            Err(SkinToneError::TooFewPixels { have: 2, need: 3 })
        ));
    }

    #[test]
    fn nearest_tone_and_ties() {
        let p = TonePalette::monk();
        assert_eq!(map_to_mst(to_f(p.color(4)), &p), 4);
        let ramp = TonePalette::new(std::array::from_fn(|i| {
            let v = (255.0 - 255.0 * i as f64 / 9.0).round() as u8;
            [v, v, v]
        }));
        // distances to (10,10,10): tone 10 at (0,0,0) is 17.3, tone 9 at (28,28,28) is 31.2
        assert_eq!(map_to_mst([10.0; 3], &ramp), 10);
        let a = to_f(p.color(5));
        let b = to_f(p.color(6));
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0];
        assert_eq!(dist2(&mid, &a), dist2(&mid, &b));
        assert_eq!(map_to_mst(mid, &p), 5);
    }

    #[test]
    fn palette_parsing() {
        let p = TonePalette::monk();
        assert_eq!(p.color(1), [0xf6, 0xed, 0xe4]);
        assert_eq!(p.color(10), [0x29, 0x24, 0x20]);
        for t in 1..=10u8 {
            assert_eq!(map_to_mst(to_f(p.color(t)), &p), t);
        }
        assert!(TonePalette::from_toml("[tones]\n1 = \"#000000\"\n").is_err());
        assert!(TonePalette::from_toml("[tones]\n1 = \"#zz0000\"\n").is_err());
    }

    #[test]
    fn uniform_and_composite_images() {
        let p = TonePalette::monk();
        let img = RgbImage::from_pixel(20, 20, image::Rgb(p.color(7)));
        let est = estimate_tone(&img, &SkinRegion::Mask(SkinMask::full(20, 20)), &p, &KMeansConfig::default(), 4).unwrap();
        assert_eq!(est.tone, 7);
        assert_eq!(est.cluster_share, 1.0);
        assert_eq!(est.pixel_count, 400);

        // 70% tone 6, 30% tone 2
        let img = RgbImage::from_fn(10, 10, |x, _| image::Rgb(if x < 7 { p.color(6) } else { p.color(2) }));
        let est = estimate_tone(&img, &SkinRegion::Mask(SkinMask::full(10, 10)), &p, &KMeansConfig::default(), 4).unwrap();
        assert_eq!(est.tone, 6);
        assert!((est.cluster_share - 0.7).abs() < 1e-12);

        let empty = SkinRegion::Mask(SkinMask::new(10, 10));
        assert!(matches!(
            estimate_tone(&img, &empty, &p, &KMeansConfig::default(), 4),
            Err(SkinToneError::TooFewPixels { .. })
        ));
    }

    #[test]
    fn pixel_order_does_not_matter() {
        let mut rng = SplitMix64::new(5);
        let mut pixels: Vec<Rgb> = (0..500)
            .map(|_| [rng.below(256) as u8, rng.below(256) as u8, rng.below(256) as u8])
            .collect();
        let cfg = KMeansConfig::default();
        let a = kmeans_colors(&pixels, &cfg, 9).unwrap();
        rng.shuffle(&mut pixels);
        let b = kmeans_colors(&pixels, &cfg, 9).unwrap();
        assert_eq!(a, b);
        let total: usize = a.iter().map(|c| c.size).sum();
        assert_eq!(total, 500);
    }
}
