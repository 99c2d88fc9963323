//! Dataset manifests: loading, validation, splitting, sampling, and
//! demographic grouping.
//!
//! A manifest is a delimiter-separated text file with a header row. The
//! nine schema columns are required; any further columns are carried
//! through untouched and written back after the schema columns.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::SplitMix64;

pub const COLUMNS: [&str; 9] = [
    "sample_id",
    "image_path",
    "target",
    "subset",
    "category",
    "skin_tone",
    "gender",
    "age",
    "split",
];

#[derive(Debug, Error)]
pub enum ManifestError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed delimited text: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: duplicate sample_id `{id}`")]
    DuplicateId { line: usize, id: String },
    #[error("line {line}: bad value `{value}` in column `{column}`")]
    BadEnumValue {
        line: usize,
        column: String,
        value: String,
    },
    #[error("empty stratum: {0}")]
    EmptyStratum(String),
    #[error("insufficient {side} samples: need {needed}, have {available}")]
    InsufficientSamples {
        side: Side,
        needed: usize,
        available: usize,
    },
    #[error("invalid sampling spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Real,
    Fake,
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Side::Real => "real",
            Side::Fake => "fake",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Category {
    DeepfakeVideo,
    #[serde(rename = "GAN")]
    Gan,
    #[serde(rename = "DM")]
    Dm,
    Real,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Gender {
    Female,
    Male,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Age {
    Child,
    Youth,
    Adult,
    MiddleAge,
    Senior,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
    #[default]
    Unassigned,
}

macro_rules! text_enum {
    ($ty:ty { $($variant:path => $canon:literal $(| $alias:literal)*),+ $(,)? }) => {
        impl $ty {
            pub fn as_str(&self) -> &'static str {
                match self { $($variant => $canon),+ }
            }
        }
        impl FromStr for $ty {
            type Err = ();
            fn from_str(s: &str) -> Result<Self, ()> {
                match s {
                    $($canon $(| $alias)* => Ok($variant),)+
                    _ => Err(()),
                }
            }
        }
        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

text_enum!(Category {
    Category::DeepfakeVideo => "DeepfakeVideo" | "DF",
    Category::Gan => "GAN",
    Category::Dm => "DM",
    Category::Real => "Real",
});
text_enum!(Gender {
    Gender::Female => "Female" | "F",
    Gender::Male => "Male" | "M",
});
text_enum!(Age {
    Age::Child => "Child",
    Age::Youth => "Youth",
    Age::Adult => "Adult",
    Age::MiddleAge => "MiddleAge",
    Age::Senior => "Senior",
});
text_enum!(Split {
    Split::Train => "train",
    Split::Test => "test",
    Split::Unassigned => "unassigned" | "",
});

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Female, Gender::Male];
    pub fn index(self) -> usize {
        self as usize
    }
}

impl Age {
    pub const ALL: [Age; 5] = [Age::Child, Age::Youth, Age::Adult, Age::MiddleAge, Age::Senior];
    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleRecord {
    pub sample_id: String,
    pub image_path: String,
    /// 0 = real, 1 = fake.
    pub target: u8,
    pub subset: String,
    pub category: Category,
    pub skin_tone: Option<u8>,
    pub gender: Option<Gender>,
    pub age: Option<Age>,
    pub split: Split,
    /// Values of non-schema columns, aligned with [`Manifest::extra_columns`].
    pub extra: Vec<String>,
}

impl SampleRecord {
    pub fn new(sample_id: &str, target: u8, subset: &str) -> Self {
        Self {
            sample_id: sample_id.to_string(),
            image_path: format!("{sample_id}.png"),
            target,
            subset: subset.to_string(),
            category: if target == 0 { Category::Real } else { Category::Dm },
            skin_tone: None,
            gender: None,
            age: None,
            split: Split::Unassigned,
            extra: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub extra_columns: Vec<String>,
    pub records: Vec<SampleRecord>,
}

impl Manifest {
    pub fn new(records: Vec<SampleRecord>) -> Self {
        Self {
            extra_columns: Vec::new(),
            records,
        }
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn with_records(&self, records: Vec<SampleRecord>) -> Self {
        Self {
            extra_columns: self.extra_columns.clone(),
            records,
        }
    }

    pub fn filter_split(&self, split: Split) -> Manifest {
        self.with_records(
            self.records
                .iter()
                .filter(|r| r.split == split)
                .cloned()
                .collect(),
        )
    }

    pub fn index_of(&self) -> std::collections::HashMap<&str, usize> {
        self.records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.sample_id.as_str(), i))
            .collect()
    }

    /// Rejects duplicate sample ids and out-of-range labels.
    pub fn validate(&self) -> Result<(), ManifestError> {
        let mut seen = HashSet::new();
        for (i, r) in self.records.iter().enumerate() {
            let line = i + 2;
            if !seen.insert(r.sample_id.as_str()) {
                return Err(ManifestError::DuplicateId {
                    line,
                    id: r.sample_id.clone(),
                });
            }
            if r.target > 1 {
                return Err(bad(line, "target", &r.target.to_string()));
            }
            if let Some(t) = r.skin_tone {
                if !(1..=10).contains(&t) {
                    return Err(bad(line, "skin_tone", &t.to_string()));
                }
            }
        }
        Ok(())
    }
}

fn bad(line: usize, column: &str, value: &str) -> ManifestError {
    ManifestError::BadEnumValue {
        line,
        column: column.to_string(),
        value: value.to_string(),
    }
}

fn delimiter_for(path: &Path) -> u8 {
    match path.extension().and_then(|e| e.to_str()) {
        Some("tsv") | Some("tab") => b'\t',
        _ => b',',
    }
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Manifest, ManifestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_manifest(&text, delimiter_for(path))
}

pub fn parse_manifest(text: &str, delimiter: u8) -> Result<Manifest, ManifestError> {
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let mut pos = [0usize; 9];
    for (slot, name) in pos.iter_mut().zip(COLUMNS) {
        *slot = header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| ManifestError::MissingColumn(name.to_string()))?;
    }
    let extra_idx: Vec<usize> = (0..header.len()).filter(|i| !pos.contains(i)).collect();
    let extra_columns = extra_idx.iter().map(|&i| header[i].clone()).collect();

    let mut records = Vec::new();
    let mut seen = HashSet::new();
    for (i, row) in rdr.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let get = |k: usize| row.get(pos[k]).unwrap_or("");
        let sample_id = get(0).to_string();
        if sample_id.is_empty() {
            return Err(bad(line, "sample_id", ""));
        }
        if !seen.insert(sample_id.clone()) {
            return Err(ManifestError::DuplicateId {
                line,
                id: sample_id,
            });
        }
        let target = match get(2) {
            "0" => 0,
            "1" => 1,
            v => return Err(bad(line, "target", v)),
        };
        let category = get(4)
            .parse::<Category>()
            .map_err(|_| bad(line, "category", get(4)))?;
        let skin_tone = match get(5) {
            "" => None,
            v => match v.parse::<u8>() {
                Ok(t) if (1..=10).contains(&t) => Some(t),
                _ => return Err(bad(line, "skin_tone", v)),
            },
        };
        let gender = match get(6) {
            "" => None,
            v => Some(v.parse().map_err(|_| bad(line, "gender", v))?),
        };
        let age = match get(7) {
            "" => None,
            v => Some(v.parse().map_err(|_| bad(line, "age", v))?),
        };
        let split = get(8).parse().map_err(|_| bad(line, "split", get(8)))?;
        records.push(SampleRecord {
            sample_id,
            image_path: get(1).to_string(),
            target,
            subset: get(3).to_string(),
            category,
            skin_tone,
            gender,
            age,
            split,
            extra: extra_idx
                .iter()
                .map(|&k| row.get(k).unwrap_or("").to_string())
                .collect(),
        });
    }
    Ok(Manifest {
        extra_columns,
        records,
    })
}

pub fn write_manifest(m: &Manifest, path: impl AsRef<Path>) -> Result<(), ManifestError> {
    let path = path.as_ref();
    let text = manifest_to_string(m, delimiter_for(path))?;
    std::fs::write(path, text).map_err(|source| ManifestError::Io {
        path: path.display().to_string(),
        source,
    })
}

pub fn manifest_to_string(m: &Manifest, delimiter: u8) -> Result<String, ManifestError> {
    let mut w = csv::WriterBuilder::new()
        .delimiter(delimiter)
        .from_writer(Vec::new());
    let mut header: Vec<&str> = COLUMNS.to_vec();
    header.extend(m.extra_columns.iter().map(String::as_str));
    w.write_record(&header)?;
    for r in &m.records {
        let mut row = vec![
            r.sample_id.clone(),
            r.image_path.clone(),
            r.target.to_string(),
            r.subset.clone(),
            r.category.to_string(),
            r.skin_tone.map(|t| t.to_string()).unwrap_or_default(),
            r.gender.map(|g| g.to_string()).unwrap_or_default(),
            r.age.map(|a| a.to_string()).unwrap_or_default(),
            r.split.to_string(),
        ];
        row.extend(
            (0..m.extra_columns.len()).map(|k| r.extra.get(k).cloned().unwrap_or_default()),
        );
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| ManifestError::Io {
        path: "<buffer>".into(),
        source: e.into_error(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv writer emits utf-8"))
}

// ---------------------------------------------------------------------------
// Grouping
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Attribute {
    SkinTone10,
    ToneBucket3,
    Gender,
    Age,
    Intersection,
}

impl Attribute {
    pub fn name(self) -> &'static str {
        match self {
            Attribute::SkinTone10 => "SkinTone10",
            Attribute::ToneBucket3 => "SkinTone",
            Attribute::Gender => "Gender",
            Attribute::Age => "Age",
            Attribute::Intersection => "Intersection",
        }
    }
}

impl FromStr for Attribute {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "skintone10" | "skin_tone10" | "tone10" => Ok(Attribute::SkinTone10),
            "skintone" | "skin_tone" | "tonebucket3" | "tone_bucket" => Ok(Attribute::ToneBucket3),
            "gender" => Ok(Attribute::Gender),
            "age" => Ok(Attribute::Age),
            "intersection" => Ok(Attribute::Intersection),
            _ => Err(format!("unknown attribute `{s}`")),
        }
    }
}

const TONE_LABELS: [&str; 10] = [
    "Tone1", "Tone2", "Tone3", "Tone4", "Tone5", "Tone6", "Tone7", "Tone8", "Tone9", "Tone10",
];
const BUCKET_LABELS: [&str; 3] = ["Light", "Medium", "Dark"];
const INTERSECTION_LABELS: [&str; 6] = ["F-L", "F-M", "F-D", "M-L", "M-M", "M-D"];

/// Upper tone bounds of the Light and Medium buckets; Dark takes the rest.
/// Any `1 <= light_max < medium_max < 10` partitions tones 1..=10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToneBuckets {
    pub light_max: u8,
    pub medium_max: u8,
}

impl Default for ToneBuckets {
    fn default() -> Self {
        Self {
            light_max: 3,
            medium_max: 6,
        }
    }
}

impl ToneBuckets {
    pub fn bucket(&self, tone: u8) -> Option<usize> {
        match tone {
            0 => None,
            t if t <= self.light_max => Some(0),
            t if t <= self.medium_max => Some(1),
            t if t <= 10 => Some(2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupingSpec {
    pub attribute: Attribute,
    pub buckets: ToneBuckets,
}

impl GroupingSpec {
    pub fn new(attribute: Attribute) -> Self {
        Self {
            attribute,
            buckets: ToneBuckets::default(),
        }
    }

    /// Every group label this grouping can produce, in canonical order.
    pub fn groups(&self) -> &'static [&'static str] {
        match self.attribute {
            Attribute::SkinTone10 => &TONE_LABELS,
            Attribute::ToneBucket3 => &BUCKET_LABELS,
            Attribute::Gender => &["Female", "Male"],
            Attribute::Age => &["Child", "Youth", "Adult", "MiddleAge", "Senior"],
            Attribute::Intersection => &INTERSECTION_LABELS,
        }
    }
}

impl From<Attribute> for GroupingSpec {
    fn from(a: Attribute) -> Self {
        Self::new(a)
    }
}

/// Group label of `r` under `g`, or `None` when a needed annotation is missing.
pub fn group_of(r: &SampleRecord, g: &GroupingSpec) -> Option<&'static str> {
    group_index(r, g).map(|i| g.groups()[i])
}

/// Position of the record's group in [`GroupingSpec::groups`].
pub fn group_index(r: &SampleRecord, g: &GroupingSpec) -> Option<usize> {
    match g.attribute {
        Attribute::SkinTone10 => r.skin_tone.filter(|t| (1..=10).contains(t)).map(|t| t as usize - 1),
        Attribute::ToneBucket3 => r.skin_tone.and_then(|t| g.buckets.bucket(t)),
        Attribute::Gender => r.gender.map(Gender::index),
        Attribute::Age => r.age.map(Age::index),
        Attribute::Intersection => {
            let gi = r.gender?.index();
            let b = g.buckets.bucket(r.skin_tone?)?;
            Some(gi * 3 + b)
        }
    }
}

// ---------------------------------------------------------------------------
// Splitting and sampling
// ---------------------------------------------------------------------------

/// A field a stratified split can key on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StrataField {
    Subset,
    Category,
    Group(Attribute),
}

impl FromStr for StrataField {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "subset" => Ok(StrataField::Subset),
            "category" => Ok(StrataField::Category),
            other => other.parse().map(StrataField::Group),
        }
    }
}

fn stratum_key(r: &SampleRecord, strata: &[StrataField]) -> String {
    let mut key = String::new();
    for f in strata {
        let part = match f {
            StrataField::Subset => r.subset.clone(),
            StrataField::Category => r.category.to_string(),
            StrataField::Group(a) => group_of(r, &GroupingSpec::new(*a))
                .unwrap_or("<absent>")
                .to_string(),
        };
        key.push_str(&part);
        key.push('\u{1f}');
    }
    key.push_str(if r.target == 1 { "fake" } else { "real" });
    key
}

/// Stratified train/test split. Within each stratum (observed combination of
/// the `strata` values and the target) the test share is
/// `round_half_even(size * test_fraction)`; the remainder goes to train.
/// Output manifests keep the input order and have `split` set.
pub fn split(
    m: &Manifest,
    test_fraction: f64,
    strata: &[StrataField],
    seed: u64,
) -> Result<(Manifest, Manifest), ManifestError> {
    let assigned = assign_split(m, test_fraction, strata, seed)?;
    Ok((
        assigned.filter_split(Split::Train),
        assigned.filter_split(Split::Test),
    ))
}

/// Like [`split`] but returns the whole manifest with the `split` column filled.
pub fn assign_split(
    m: &Manifest,
    test_fraction: f64,
    strata: &[StrataField],
    seed: u64,
) -> Result<Manifest, ManifestError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(ManifestError::InvalidSpec(format!(
            "test fraction {test_fraction} outside (0, 1)"
        )));
    }
    if m.is_empty() {
        return Err(ManifestError::EmptyStratum("<manifest is empty>".into()));
    }
    let mut by_stratum: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for (i, r) in m.records.iter().enumerate() {
        by_stratum.entry(stratum_key(r, strata)).or_default().push(i);
    }
    let mut rng = SplitMix64::new(seed);
    let mut is_test = vec![false; m.len()];
    for idx in by_stratum.values_mut() {
        let n_test = (idx.len() as f64 * test_fraction).round_ties_even() as usize;
        rng.shuffle(idx);
        for &i in &idx[..n_test.min(idx.len())] {
            is_test[i] = true;
        }
    }
    let records = m
        .records
        .iter()
        .zip(&is_test)
        .map(|(r, &t)| SampleRecord {
            split: if t { Split::Test } else { Split::Train },
            ..r.clone()
        })
        .collect();
    Ok(m.with_records(records))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SamplingSpec {
    /// Keep `round_half_even(fraction * |subset|)` records of every subset.
    Fraction { fraction: f64, seed: u64 },
    /// Draw `total` records with real:fake = `real:fake` after flooring.
    Ratio {
        real: u32,
        fake: u32,
        total: usize,
        seed: u64,
    },
}

/// Per-subset random subsampling.
pub fn subsample(m: &Manifest, spec: &SamplingSpec) -> Result<Manifest, ManifestError> {
    let SamplingSpec::Fraction { fraction, seed } = *spec else {
        return Err(ManifestError::InvalidSpec("subsample needs fraction mode".into()));
    };
    if !(fraction > 0.0 && fraction <= 1.0) {
        return Err(ManifestError::InvalidSpec(format!(
            "fraction {fraction} outside (0, 1]"
        )));
    }
    let mut by_subset: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, r) in m.records.iter().enumerate() {
        by_subset.entry(r.subset.as_str()).or_default().push(i);
    }
    let mut rng = SplitMix64::new(seed);
    let mut keep = vec![false; m.len()];
    for idx in by_subset.values() {
        let k = (idx.len() as f64 * fraction).round_ties_even() as usize;
        for j in rng.choose_sorted(idx.len(), k.min(idx.len())) {
            keep[idx[j]] = true;
        }
    }
    Ok(m.with_records(
        m.records
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(r, _)| r.clone())
            .collect(),
    ))
}

/// Target (real, fake) counts for a ratio spec: each side is
/// `floor(total * side / (real + fake))`.
pub fn ratio_counts(real: u32, fake: u32, total: usize) -> (usize, usize) {
    let parts = real as u128 + fake as u128;
    let r = (total as u128 * real as u128 / parts) as usize;
    let f = (total as u128 * fake as u128 / parts) as usize;
    (r, f)
}

/// Re-draws a manifest at a fixed real:fake ratio and total size.
pub fn rebalance(m: &Manifest, spec: &SamplingSpec) -> Result<Manifest, ManifestError> {
    let SamplingSpec::Ratio {
        real,
        fake,
        total,
        seed,
    } = *spec
    else {
        return Err(ManifestError::InvalidSpec("rebalance needs ratio mode".into()));
    };
    if real == 0 || fake == 0 || total == 0 {
        return Err(ManifestError::InvalidSpec(
            "ratio parts and total must be positive".into(),
        ));
    }
    let (need_r, need_f) = ratio_counts(real, fake, total);
    let reals: Vec<usize> = (0..m.len()).filter(|&i| m.records[i].target == 0).collect();
    let fakes: Vec<usize> = (0..m.len()).filter(|&i| m.records[i].target == 1).collect();
    if reals.len() < need_r {
        return Err(ManifestError::InsufficientSamples {
            side: Side::Real,
            needed: need_r,
            available: reals.len(),
        });
    }
    if fakes.len() < need_f {
        return Err(ManifestError::InsufficientSamples {
            side: Side::Fake,
            needed: need_f,
            available: fakes.len(),
        });
    }
    let mut rng = SplitMix64::new(seed);
    let mut keep = vec![false; m.len()];
    for j in rng.choose_sorted(reals.len(), need_r) {
        keep[reals[j]] = true;
    }
    for j in rng.choose_sorted(fakes.len(), need_f) {
        keep[fakes[j]] = true;
    }
    Ok(m.with_records(
        m.records
            .iter()
            .zip(&keep)
            .filter(|(_, &k)| k)
            .map(|(r, _)| r.clone())
            .collect(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str = "sample_id,image_path,target,subset,category,skin_tone,gender,age,split";

    fn pool(n_real: usize, n_fake: usize) -> Manifest {
        let mut recs = Vec::new();
        for i in 0..n_real {
            recs.push(SampleRecord::new(&format!("r{i}"), 0, "real"));
        }
        for i in 0..n_fake {
            recs.push(SampleRecord::new(&format!("f{i}"), 1, "fake"));
        }
        Manifest::new(recs)
    }

    #[test]
    fn parses_well_formed_rows_and_keeps_extras() {
        let text = format!(
            "{HEADER},note\na,a.png,0,ffhq,Real,2,Female,Adult,train,x\n\
             b,b.png,1,sd,DM,,Male,,test,y\nc,c.png,1,sg,GAN,10,,Senior,,z\n"
        );
        let m = parse_manifest(&text, b',').unwrap();
        assert_eq!(m.len(), 3);
        assert_eq!(m.extra_columns, vec!["note"]);
        assert_eq!(m.records[1].skin_tone, None);
        assert_eq!(m.records[2].split, Split::Unassigned);
        assert_eq!(m.records[2].extra, vec!["z"]);
        let back = parse_manifest(&manifest_to_string(&m, b',').unwrap(), b',').unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn tone_out_of_range_is_rejected_with_line() {
        let text = format!("{HEADER}\na,a.png,0,s,Real,11,,,\n");
        match parse_manifest(&text, b',') {
            Err(ManifestError::BadEnumValue { line, column, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(column, "skin_tone");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn duplicate_ids_are_rejected() {
        let text = format!("{HEADER}\nx1,a.png,0,s,Real,,,,\nx1,b.png,1,s,DM,,,,\n");
        assert!(matches!(
            parse_manifest(&text, b','),
            Err(ManifestError::DuplicateId { line: 3, .. })
        ));
    }

    #[test]
    fn missing_column_is_named() {
        let text = "sample_id,image_path,target\na,a.png,0\n";
        match parse_manifest(text, b',') {
            Err(ManifestError::MissingColumn(c)) => assert_eq!(c, "subset"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn split_counts_per_stratum() {
        let m = Manifest::new((0..100).map(|i| SampleRecord::new(&i.to_string(), 1, "s")).collect());
        let (train, test) = split(&m, 0.2, &[StrataField::Subset], 1).unwrap();
        assert_eq!((train.len(), test.len()), (80, 20));

        let m = Manifest::new((0..5).map(|i| SampleRecord::new(&i.to_string(), 1, "s")).collect());
        let (train, test) = split(&m, 0.2, &[], 1).unwrap();
        assert_eq!((train.len(), test.len()), (4, 1));
    }

    #[test]
    fn split_rounds_half_to_even() {
        // 5 * 0.5 = 2.5 -> 2 test; 7 * 0.5 = 3.5 -> 4 test
        let mut recs: Vec<_> = (0..5).map(|i| SampleRecord::new(&format!("a{i}"), 1, "a")).collect();
        recs.extend((0..7).map(|i| SampleRecord::new(&format!("b{i}"), 1, "b")));
        let (_, test) = split(&Manifest::new(recs), 0.5, &[StrataField::Subset], 3).unwrap();
        assert_eq!(test.records.iter().filter(|r| r.subset == "a").count(), 2);
        assert_eq!(test.records.iter().filter(|r| r.subset == "b").count(), 4);
    }

    #[test]
    fn split_is_deterministic() {
        let m = pool(30, 40);
        let a = assign_split(&m, 0.2, &[StrataField::Subset], 9).unwrap();
        let b = assign_split(&m, 0.2, &[StrataField::Subset], 9).unwrap();
        assert_eq!(a, b);
        assert!(split(&Manifest::default(), 0.2, &[], 1).is_err());
    }

    #[test]
    fn subsample_counts() {
        let mut recs: Vec<_> = (0..10).map(|i| SampleRecord::new(&format!("a{i}"), 1, "a")).collect();
        recs.extend((0..20).map(|i| SampleRecord::new(&format!("b{i}"), 1, "b")));
        let m = Manifest::new(recs);
        let s = subsample(&m, &SamplingSpec::Fraction { fraction: 0.4, seed: 5 }).unwrap();
        assert_eq!(s.records.iter().filter(|r| r.subset == "a").count(), 4);
        assert_eq!(s.records.iter().filter(|r| r.subset == "b").count(), 8);
        let all = subsample(&m, &SamplingSpec::Fraction { fraction: 1.0, seed: 5 }).unwrap();
        assert_eq!(all, m);
        let other = subsample(&m, &SamplingSpec::Fraction { fraction: 0.4, seed: 6 }).unwrap();
        assert_eq!(other.len(), s.len());
        assert_ne!(other, s);
    }

    #[test]
    fn rebalance_counts() {
        let spec = |real, fake, total| SamplingSpec::Ratio { real, fake, total, seed: 1 };
        // 400 reals cannot cover 500 without inventing records
        match rebalance(&pool(400, 1200), &spec(1, 1, 1000)) {
            Err(ManifestError::InsufficientSamples { side: Side::Real, needed: 500, available: 400 }) => {}
            other => panic!("{other:?}"),
        }
        let out = rebalance(&pool(600, 1200), &spec(1, 1, 1000)).unwrap();
        let reals = out.records.iter().filter(|r| r.target == 0).count();
        assert_eq!((reals, out.len() - reals), (500, 500));

        let out = rebalance(&pool(1000, 1000), &spec(10, 1, 1100)).unwrap();
        let reals = out.records.iter().filter(|r| r.target == 0).count();
        assert_eq!((reals, out.len() - reals), (1000, 100));

        match rebalance(&pool(50, 2000), &spec(1, 10, 1100)) {
            Err(ManifestError::InsufficientSamples { side: Side::Real, needed: 100, available: 50 }) => {}
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn groups_and_buckets() {
        let mut r = SampleRecord::new("a", 0, "s");
        r.skin_tone = Some(2);
        assert_eq!(group_of(&r, &Attribute::ToneBucket3.into()), Some("Light"));
        r.skin_tone = Some(7);
        r.gender = Some(Gender::Male);
        assert_eq!(group_of(&r, &Attribute::Intersection.into()), Some("M-D"));
        r.skin_tone = None;
        assert_eq!(group_of(&r, &Attribute::ToneBucket3.into()), None);
        assert_eq!(group_of(&r, &Attribute::Intersection.into()), None);

        let b = ToneBuckets::default();
        let got: Vec<_> = (1..=10).map(|t| b.bucket(t).unwrap()).collect();
        assert_eq!(got, vec![0, 0, 0, 1, 1, 1, 2, 2, 2, 2]);
    }
}
