//! Report and diagnostics files: score CSVs, `report.json` / `report.csv` /
//! `les.csv`, and the diagnostics CSV set.
//!
//! All writes are atomic (temp file + rename). Output is deterministic:
//! maps are sorted, floats use the shortest round-trip representation, and
//! every report carries the score orientation in its header.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use crate::bank::GroupSplit;
use crate::detectors::{ScoreSet, ORIENTATION};
use crate::error::{HpmError, Result};
use crate::eval::EvalReport;
use crate::fsio;
use crate::geometry::SpectrumDiagnostics;
use crate::nullspace::{NullScatterReport, RadiusProfile};

/// Write one detector's scores for one bank.
pub fn write_score_csv(path: &Path, set: &ScoreSet) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# detector: {}", set.detector);
    let _ = writeln!(out, "# source: {}", set.source);
    let _ = writeln!(out, "# orientation: {ORIENTATION}");
    out.push_str("index,score\n");
    for (i, s) in set.scores.iter().enumerate() {
        let _ = writeln!(out, "{i},{s}");
    }
    fsio::atomic_write(path, out.as_bytes())
}

/// Read a score CSV written by [`write_score_csv`]; values round-trip
/// exactly.
pub fn read_score_csv(path: &Path) -> Result<ScoreSet> {
    let text = fs::read_to_string(path).map_err(|e| HpmError::io(path, e))?;
    let mut detector = String::new();
    let mut source = String::new();
    let mut scores = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if let Some(rest) = line.strip_prefix('#') {
            let rest = rest.trim();
            if let Some(v) = rest.strip_prefix("detector:") {
                detector = v.trim().to_string();
            } else if let Some(v) = rest.strip_prefix("source:") {
                source = v.trim().to_string();
            }
            continue;
        }
        if line.is_empty() || line.starts_with("index,") {
            continue;
        }
        let (_, score) = line.split_once(',').ok_or_else(|| HpmError::Manifest {
            path: path.to_path_buf(),
            reason: format!("line {}: expected index,score", lineno + 1),
        })?;
        let v: f64 = score.trim().parse().map_err(|_| HpmError::Manifest {
            path: path.to_path_buf(),
            reason: format!("line {}: bad score {score:?}", lineno + 1),
        })?;
        scores.push(v);
    }
    if scores.is_empty() {
        return Err(HpmError::EmptyScores {
            what: path.display().to_string(),
        });
    }
    ScoreSet::new(scores, &detector, &source)
}

/// `report.json`: the full [`EvalReport`], pretty-printed with sorted keys.
pub fn write_report_json(path: &Path, report: &EvalReport) -> Result<()> {
    let json = serde_json::to_vec_pretty(report).expect("report serialization");
    fsio::atomic_write(path, &json)
}

/// `report.csv`: one row per detector × (OOD set | "avg"), AUROC/FPR95 ×100.
pub fn write_report_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# orientation: {} (OOD is the positive class)",
        report.orientation
    );
    out.push_str("model,detector,ood_set,auroc,fpr95\n");
    for detector in report.averaged.keys() {
        for (set, by_det) in &report.per_set {
            if let Some(m) = by_det.get(detector) {
                let _ = writeln!(
                    out,
                    "{},{},{},{:.4},{:.4}",
                    report.model,
                    detector,
                    set,
                    100.0 * m.auroc,
                    100.0 * m.fpr95
                );
            }
        }
        let avg = &report.averaged[detector];
        let _ = writeln!(
            out,
            "{},{},avg,{:.4},{:.4}",
            report.model,
            detector,
            100.0 * avg.auroc,
            100.0 * avg.fpr95
        );
    }
    fsio::atomic_write(path, out.as_bytes())
}

/// `les.csv`: single row relating the best averaged AUROC to training cost.
pub fn write_les_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let (les, cost) = match (report.les, report.cost) {
        (Some(l), Some(c)) => (l, c),
        _ => {
            return Err(HpmError::param(
                "cost",
                "les.csv requires a cost; pass --cost",
            ))
        }
    };
    let mut out = String::new();
    let _ = writeln!(out, "# orientation: {}", report.orientation);
    out.push_str("model,best_detector,best_auroc,cost,cost_unit,les\n");
    let _ = writeln!(
        out,
        "{},{},{:.4},{},{},{:.4}",
        report.model,
        report.best_detector,
        100.0 * report.best_auroc,
        cost,
        report.cost_unit.as_deref().unwrap_or(""),
        les
    );
    fsio::atomic_write(path, out.as_bytes())
}

/// `null_scatter.csv`: class,count,a_null (blank for skipped classes).
pub fn write_null_scatter_csv(
    path: &Path,
    report: &NullScatterReport,
    counts: &[usize],
) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# orientation: {ORIENTATION}");
    out.push_str("class,count,a_null\n");
    for (c, v) in report.per_class.iter().enumerate() {
        match v {
            Some(a) => {
                let _ = writeln!(out, "{c},{},{a}", counts[c]);
            }
            None => {
                let _ = writeln!(out, "{c},{},", counts[c]);
            }
        }
    }
    fsio::atomic_write(path, out.as_bytes())
}

/// `radius.csv`: class,count,mean_norm (blank for empty classes).
pub fn write_radius_csv(path: &Path, profile: &RadiusProfile, counts: &[usize]) -> Result<()> {
    let mut out = String::new();
    let _ = writeln!(out, "# orientation: {ORIENTATION}");
    out.push_str("class,count,mean_norm\n");
    for (c, v) in profile.per_class_mean_norm.iter().enumerate() {
        match v {
            Some(m) => {
                let _ = writeln!(out, "{c},{},{m}", counts[c]);
            }
            None => {
                let _ = writeln!(out, "{c},{},", counts[c]);
            }
        }
    }
    fsio::atomic_write(path, out.as_bytes())
}

/// One row of `spectrum.csv`: a variant's covariance spectrum for either
/// the pooled estimate or one class.
pub struct SpectrumRow {
    pub variant: String,
    /// `"pooled"` or a class id.
    pub scope: String,
    pub diagnostics: SpectrumDiagnostics,
}

/// `spectrum.csv`: per-variant effective rank, log condition number, and the
/// full eigenvalue list (wide rows).
pub fn write_spectrum_csv(path: &Path, rows: &[SpectrumRow]) -> Result<()> {
    let d = rows
        .first()
        .map(|r| r.diagnostics.eigenvalues.len())
        .unwrap_or(0);
    let mut out = String::new();
    let _ = writeln!(out, "# eigenvalues descending; log_condition uses ln");
    out.push_str("variant,scope,effective_rank,log_condition");
    for j in 0..d {
        let _ = write!(out, ",eig_{j}");
    }
    out.push('\n');
    for row in rows {
        let _ = write!(
            out,
            "{},{},{},{}",
            row.variant, row.scope, row.diagnostics.effective_rank, row.diagnostics.log_condition
        );
        for v in row.diagnostics.eigenvalues.iter() {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    fsio::atomic_write(path, out.as_bytes())
}

/// Aggregates written to `summary.json` by the diagnose command.
#[derive(Debug, Serialize)]
pub struct DiagnosticsSummary {
    pub model: String,
    pub orientation: String,
    /// Conventions the method leaves open, echoed for interpretability.
    pub notes: BTreeMap<String, String>,
    pub split: Option<GroupSplit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub null_scatter: Option<NullScatterSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub radius: Option<RadiusSummary>,
    pub spectrum: BTreeMap<String, SpectrumSummary>,
}

#[derive(Debug, Serialize)]
pub struct NullScatterSummary {
    pub head_avg: f64,
    pub tail_avg: f64,
    pub skipped_classes: Vec<usize>,
}

#[derive(Debug, Serialize)]
pub struct RadiusSummary {
    pub head_mean: f64,
    pub tail_mean: f64,
    pub tail_head_ratio: Option<f64>,
}

#[derive(Debug, Serialize)]
pub struct SpectrumSummary {
    /// Effective rank of the pooled metric, or the max over classes.
    pub effective_rank_max: f64,
    pub effective_rank_median: f64,
    pub log_condition_median: f64,
}

pub fn write_summary_json(path: &Path, summary: &DiagnosticsSummary) -> Result<()> {
    let json = serde_json::to_vec_pretty(summary).expect("summary serialization");
    fsio::atomic_write(path, &json)
}

/// Median of a non-empty slice (mean of the middle pair for even lengths).
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}
