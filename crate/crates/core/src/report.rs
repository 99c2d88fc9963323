//! Rendering of fairness reports (canonical JSON, markdown, flat text),
//! plot-ready series, and run directories.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::metrics::{FairnessReport, GroupFairness, MetricBlock, Utility};
use crate::perturb::RatioTable;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("report has no `{0}` grouping")]
    MissingGrouping(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Json,
    Markdown,
    TableText,
}

impl std::str::FromStr for Format {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "json" => Ok(Format::Json),
            "markdown" | "md" => Ok(Format::Markdown),
            "table-text" | "text" | "tsv" => Ok(Format::TableText),
            _ => Err(format!("unknown format `{s}` (json|markdown|table-text)")),
        }
    }
}

pub fn render(report: &FairnessReport, format: Format) -> String {
    match format {
        Format::Json => to_canonical_json(report).expect("reports always serialize"),
        Format::Markdown => markdown(report),
        Format::TableText => table_text(report),
    }
}

// ---------------------------------------------------------------------------
// Canonical JSON
// ---------------------------------------------------------------------------

/// `printf("%.6g")`: six significant digits, trailing zeros dropped,
/// exponent form outside `[1e-4, 1e6)`.
pub fn format_g6(v: f64) -> String {
    if v == 0.0 {
        return "0".to_string();
    }
    let sci = format!("{v:.5e}");
    let (mant, exp) = sci.split_once('e').unwrap();
    let exp: i32 = exp.parse().unwrap();
    if !(-4..6).contains(&exp) {
        let mant = trim_zeros(mant);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{mant}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{v:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn write_value(out: &mut String, v: &Value, indent: usize) {
    let pad = |n: usize| "  ".repeat(n);
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                write!(out, "{i}").unwrap();
            } else if let Some(u) = n.as_u64() {
                write!(out, "{u}").unwrap();
            } else {
                let f = n.as_f64().unwrap();
                if f.is_finite() {
                    out.push_str(&format_g6(f));
                } else {
                    out.push_str("null");
                }
            }
        }
        Value::String(s) => out.push_str(&serde_json::to_string(s).unwrap()),
        Value::Array(items) => {
            if items.is_empty() {
                out.push_str("[]");
                return;
            }
            out.push_str("[\n");
            for (i, item) in items.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                write_value(out, item, indent + 1);
                out.push_str(if i + 1 < items.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push(']');
        }
        Value::Object(map) => {
            if map.is_empty() {
                out.push_str("{}");
                return;
            }
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort();
            out.push_str("{\n");
            for (i, k) in keys.iter().enumerate() {
                out.push_str(&pad(indent + 1));
                out.push_str(&serde_json::to_string(k).unwrap());
                out.push_str(": ");
                write_value(out, &map[k.as_str()], indent + 1);
                out.push_str(if i + 1 < keys.len() { ",\n" } else { "\n" });
            }
            out.push_str(&pad(indent));
            out.push('}');
        }
    }
}

/// Sorted keys, two-space indent, floats as `%.6g`, trailing newline.
pub fn to_canonical_json<T: Serialize>(value: &T) -> Result<String, ReportError> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&mut out, &v, 0);
    out.push('\n');
    Ok(out)
}

// ---------------------------------------------------------------------------
// Markdown and flat text
// ---------------------------------------------------------------------------

const FAIRNESS_COLS: [&str; 4] = ["F_MEO", "F_DP", "F_OAE", "F_EO"];
const UTILITY_COLS: [&str; 5] = ["AUC", "ACC", "AP", "EER", "FPR"];

fn fairness_values(f: &GroupFairness) -> [Option<f64>; 4] {
    [f.f_meo, f.f_dp, f.f_oae, f.f_eo]
}

fn utility_values(u: &Utility) -> [Option<f64>; 5] {
    [u.auc, u.acc, u.ap, u.eer, u.fpr]
}

/// Percent with three decimals, `-` when undefined.
pub fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{:.3}", 100.0 * v))
}

fn higher_is_better(col: &str) -> bool {
    matches!(col, "AUC" | "ACC" | "AP")
}

/// Markdown table with the best value of each column in bold. Values are
/// compared at display precision so ties are all marked.
fn table(out: &mut String, first: &str, cols: &[&str], rows: &[(String, Vec<Option<f64>>)]) {
    write!(out, "| {first} |").unwrap();
    for c in cols {
        write!(out, " {c} |").unwrap();
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(cols.len()));
    out.push('\n');
    let best: Vec<Option<String>> = (0..cols.len())
        .map(|c| {
            let vals = rows.iter().filter_map(|r| r.1[c]);
            let b = if higher_is_better(cols[c]) {
                vals.fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))
            } else {
                vals.fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.min(v))))
            };
            b.map(|b| pct(Some(b)))
        })
        .collect();
    for (label, vals) in rows {
        write!(out, "| {label} |").unwrap();
        for (c, v) in vals.iter().enumerate() {
            let s = pct(*v);
            if rows.len() > 1 && best[c].as_deref() == Some(s.as_str()) {
                write!(out, " **{s}** |").unwrap();
            } else {
                write!(out, " {s} |").unwrap();
            }
        }
        out.push('\n');
    }
    out.push('\n');
}

fn scopes(report: &FairnessReport) -> Vec<(String, &MetricBlock)> {
    let mut v = vec![("overall".to_string(), &report.overall)];
    v.extend(report.subsets.iter().map(|(k, b)| (k.clone(), b)));
    v
}

fn markdown(report: &FairnessReport) -> String {
    let mut out = String::new();
    let scopes = scopes(report);
    writeln!(out, "# Fairness report\n").unwrap();
    writeln!(
        out,
        "{} predictions, decision threshold {}. All values in percent; best per column in bold.\n",
        report.overall.n,
        format_g6(report.threshold)
    )
    .unwrap();

    out.push_str("## Utility\n\n");
    let rows: Vec<_> = scopes
        .iter()
        .map(|(name, b)| (name.clone(), utility_values(&b.utility).to_vec()))
        .collect();
    table(&mut out, "scope", &UTILITY_COLS, &rows);

    for attr in report.overall.fairness.keys() {
        writeln!(out, "## {attr} fairness\n").unwrap();
        let rows: Vec<_> = scopes
            .iter()
            .filter_map(|(name, b)| b.fairness.get(attr).map(|f| (name.clone(), fairness_values(f).to_vec())))
            .collect();
        table(&mut out, "scope", &FAIRNESS_COLS, &rows);
    }

    if scopes.iter().any(|(_, b)| b.f_ind.is_some()) {
        out.push_str("## Individual fairness\n\n");
        let rows: Vec<_> = scopes.iter().map(|(n, b)| (n.clone(), vec![b.f_ind])).collect();
        table(&mut out, "scope", &["F_IND"], &rows);
    }

    for (attr, groups) in &report.overall.subgroups {
        if groups.is_empty() {
            continue;
        }
        writeln!(out, "## {attr} subgroups (overall)\n").unwrap();
        let rows: Vec<_> = groups
            .iter()
            .map(|(g, s)| (format!("{g} (n={})", s.n), utility_values(&s.utility).to_vec()))
            .collect();
        table(&mut out, "group", &UTILITY_COLS, &rows);
    }

    if !report.warnings.is_empty() {
        out.push_str("## Warnings\n\n");
        for w in &report.warnings {
            writeln!(out, "- {w}").unwrap();
        }
    }
    out
}

/// One tab-separated row per value: `scope, table, key, metric, value`.
fn table_text(report: &FairnessReport) -> String {
    let mut out = String::from("scope\ttable\tkey\tmetric\tvalue\n");
    let mut row = |scope: &str, table: &str, key: &str, metric: &str, v: Option<f64>| {
        let v = v.map_or_else(|| "NA".to_string(), format_g6);
        writeln!(out, "{scope}\t{table}\t{key}\t{metric}\t{v}").unwrap();
    };
    for (scope, b) in scopes(report) {
        for (c, v) in UTILITY_COLS.iter().zip(utility_values(&b.utility)) {
            row(&scope, "utility", "all", c, v);
        }
        for (attr, f) in &b.fairness {
            for (c, v) in FAIRNESS_COLS.iter().zip(fairness_values(f)) {
                row(&scope, "fairness", attr, c, v);
            }
        }
        row(&scope, "individual", "all", "F_IND", b.f_ind);
        for (attr, groups) in &b.subgroups {
            for (g, s) in groups {
                for (c, v) in UTILITY_COLS.iter().zip(utility_values(&s.utility)) {
                    row(&scope, "subgroup", &format!("{attr}:{g}"), c, v);
                }
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Plot series
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadarPoint {
    pub subset: String,
    /// Intersectional equal-odds disparity, percent.
    pub f_eo: Option<f64>,
    /// AUC, percent.
    pub auc: Option<f64>,
}

/// Intersectional F_EO and AUC per subset, in percent.
pub fn radar_data(report: &FairnessReport) -> Result<Vec<RadarPoint>, ReportError> {
    report
        .subsets
        .iter()
        .map(|(name, b)| {
            let f = b
                .fairness
                .get("Intersection")
                .ok_or_else(|| ReportError::MissingGrouping(format!("Intersection in subset {name}")))?;
            Ok(RadarPoint {
                subset: name.clone(),
                f_eo: f.f_eo.map(|v| 100.0 * v),
                auc: b.utility.auc.map(|v| 100.0 * v),
            })
        })
        .collect()
}

pub const INTERSECTION_GROUPS: [&str; 6] = ["F-L", "F-M", "F-D", "M-L", "M-M", "M-D"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubgroupBars {
    /// `(group, FPR percent)` for the six intersectional groups in
    /// canonical order; `None` when the group is absent or has no reals.
    pub bars: Vec<(String, Option<f64>)>,
    /// Smallest defined bar, drawn as a reference line.
    pub min_fpr: Option<f64>,
    pub warnings: Vec<String>,
}

/// False positive rate of each intersectional subgroup of the overall block.
pub fn subgroup_bars(report: &FairnessReport) -> Result<SubgroupBars, ReportError> {
    let groups = report
        .overall
        .subgroups
        .get("Intersection")
        .ok_or_else(|| ReportError::MissingGrouping("Intersection".into()))?;
    let mut warnings = Vec::new();
    let bars: Vec<(String, Option<f64>)> = INTERSECTION_GROUPS
        .iter()
        .map(|&g| {
            let v = groups.get(g).and_then(|s| s.utility.fpr).map(|v| 100.0 * v);
            if v.is_none() {
                warnings.push(format!("intersectional group {g} has no real samples"));
            }
            (g.to_string(), v)
        })
        .collect();
    let min_fpr = bars.iter().filter_map(|b| b.1).fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.min(v))));
    Ok(SubgroupBars {
        bars,
        min_fpr,
        warnings,
    })
}

// ---------------------------------------------------------------------------
// Run directories
// ---------------------------------------------------------------------------

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn file_digest(path: impl AsRef<Path>) -> Result<String, ReportError> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: String,
    /// Seconds since the Unix epoch when the run was written.
    pub timestamp: u64,
    pub config: Value,
    /// Input name to SHA-256 of its contents.
    pub inputs: BTreeMap<String, String>,
    /// SHA-256 of `report.json`.
    pub report_digest: String,
}

/// Run id derived from the config and input digests, so identical runs
/// land in the same directory.
pub fn run_id(config: &Value, inputs: &BTreeMap<String, String>) -> String {
    let mut text = to_canonical_json(config).unwrap_or_default();
    for (k, v) in inputs {
        text.push_str(k);
        text.push('=');
        text.push_str(v);
        text.push('\n');
    }
    sha256_hex(text.as_bytes())[..12].to_string()
}

/// Writes `config.json`, `report.json`, `report.md`, and `run.json` into
/// `root/<run_id>/` and returns that directory.
pub fn write_run(
    root: &Path,
    config: &Value,
    inputs: BTreeMap<String, String>,
    report: &FairnessReport,
) -> Result<PathBuf, ReportError> {
    write_run_files(
        root,
        config,
        inputs,
        &render(report, Format::Json),
        &[("report.md", render(report, Format::Markdown))],
    )
}

/// Like [`write_run`] for any canonical JSON document, with extra files
/// written next to it.
pub fn write_run_files(
    root: &Path,
    config: &Value,
    inputs: BTreeMap<String, String>,
    report_json: &str,
    extra: &[(&str, String)],
) -> Result<PathBuf, ReportError> {
    let id = run_id(config, &inputs);
    let dir = root.join(&id);
    std::fs::create_dir_all(&dir)?;
    std::fs::write(dir.join("config.json"), to_canonical_json(config)?)?;
    std::fs::write(dir.join("report.json"), report_json)?;
    for (name, text) in extra {
        std::fs::write(dir.join(name), text)?;
    }
    let record = RunRecord {
        run_id: id,
        timestamp: std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
        config: config.clone(),
        inputs,
        report_digest: sha256_hex(report_json.as_bytes()),
    };
    std::fs::write(dir.join("run.json"), to_canonical_json(&record)?)?;
    Ok(dir)
}

/// Markdown table of robustness ratios: one row per metric path, one
/// column per transform, three decimals.
pub fn ratio_markdown(rows: &BTreeMap<String, RatioTable>) -> String {
    let mut keys: Vec<&String> = rows.values().flat_map(|t| t.keys()).collect();
    keys.sort();
    keys.dedup();
    let mut out = String::from("# Robustness (after / before)\n\n| metric |");
    for name in rows.keys() {
        let _ = write!(out, " {name} |");
    }
    out.push_str("\n|---|");
    out.push_str(&"---:|".repeat(rows.len()));
    out.push('\n');
    for k in keys {
        let _ = write!(out, "| {k} |");
        for table in rows.values() {
            match table.get(k).copied().flatten() {
                Some(v) => {
                    let _ = write!(out, " {v:.3} |");
                }
                None => out.push_str(" n/a |"),
            }
        }
        out.push('\n');
    }
    out
}

pub fn read_report(path: impl AsRef<Path>) -> Result<FairnessReport, ReportError> {
    Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::SubgroupUtility;

    #[test]
    fn g6_formatting() {
        assert_eq!(format_g6(0.0), "0");
        assert_eq!(format_g6(1.0), "1");
        assert_eq!(format_g6(0.5), "0.5");
        assert_eq!(format_g6(1.0 / 3.0), "0.333333");
        assert_eq!(format_g6(123456.7), "123457");
        assert_eq!(format_g6(1234567.0), "1.23457e+06");
        assert_eq!(format_g6(0.0001), "0.0001");
        assert_eq!(format_g6(0.00001234), "1.234e-05");
        assert_eq!(format_g6(-2.5), "-2.5");
        assert_eq!(format_g6(0.99999999), "1");
    }

    #[test]
    fn canonical_json_sorts_and_nulls() {
        let v = serde_json::json!({"b": 1, "a": [0.1, null], "c": {"z": 2.0, "y": "s"}});
        let s = to_canonical_json(&v).unwrap();
        assert_eq!(
            s,
            "{\n  \"a\": [\n    0.1,\n    null\n  ],\n  \"b\": 1,\n  \"c\": {\n    \"y\": \"s\",\n    \"z\": 2\n  }\n}\n"
        );
    }

    #[test]
    fn empty_grouping_renders_utility_only() {
        let mut r = FairnessReport::default();
        r.overall.utility.auc = Some(0.9);
        let md = render(&r, Format::Markdown);
        assert!(md.contains("## Utility"));
        assert!(!md.contains("fairness\n"));
        assert_eq!(render(&r, Format::Json), render(&r, Format::Json));
    }

    #[test]
    fn bold_marks_column_best() {
        let mut out = String::new();
        table(
            &mut out,
            "s",
            &["AUC", "EER"],
            &[("a".into(), vec![Some(0.9), Some(0.1)]), ("b".into(), vec![Some(0.8), Some(0.05)])],
        );
        assert!(out.contains("| a | **90.000** | 10.000 |"));
        assert!(out.contains("| b | 80.000 | **5.000** |"));
    }

    #[test]
    fn bars_and_radar_guards() {
        let mut r = FairnessReport::default();
        assert!(matches!(subgroup_bars(&r), Err(ReportError::MissingGrouping(_))));
        let mut groups = BTreeMap::new();
        for g in INTERSECTION_GROUPS {
            let mut u = SubgroupUtility { n: 10, utility: Utility::default() };
            u.utility.fpr = Some(0.1);
            groups.insert(g.to_string(), u);
        }
        r.overall.subgroups.insert("Intersection".into(), groups);
        let bars = subgroup_bars(&r).unwrap();
        assert!(bars.bars.iter().all(|b| b.1 == Some(10.0)));
        assert_eq!(bars.min_fpr, Some(10.0));
        r.subsets.insert("s".into(), MetricBlock::default());
        assert!(matches!(radar_data(&r), Err(ReportError::MissingGrouping(_))));
    }
}
