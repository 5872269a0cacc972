//! Detection metrics: AUROC (Mann–Whitney, ties count half), FPR at a
//! target TPR, multi-set averaging, and the log efficiency score.
//!
//! OOD is the positive class throughout: a sample is detected when its
//! score is >= the threshold, consistent with the crate-wide
//! larger-is-OOD orientation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{HpmError, Result};

/// AUROC of separating OOD (positive) from ID scores. Equals the
/// Mann–Whitney statistic: the fraction of (ood, id) pairs with
/// `s_ood > s_id`, counting ties as one half. Sort-based, O(n log n).
pub fn auroc(id_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    check_scores("id", id_scores)?;
    check_scores("ood", ood_scores)?;

    let mut id = id_scores.to_vec();
    let mut ood = ood_scores.to_vec();
    id.sort_by(f64::total_cmp);
    ood.sort_by(f64::total_cmp);

    let mut lt = 0usize; // id values strictly below the current ood value
    let mut le = 0usize; // id values at most the current ood value
    let mut sum = 0.0_f64;
    let mut j = 0usize;
    while j < ood.len() {
        let v = ood[j];
        let mut multiplicity = 1usize;
        while j + multiplicity < ood.len() && ood[j + multiplicity] == v {
            multiplicity += 1;
        }
        while lt < id.len() && id[lt] < v {
            lt += 1;
        }
        if le < lt {
            le = lt;
        }
        while le < id.len() && id[le] <= v {
            le += 1;
        }
        sum += multiplicity as f64 * (lt as f64 + 0.5 * (le - lt) as f64);
        j += multiplicity;
    }
    Ok(sum / (id.len() as f64 * ood.len() as f64))
}

/// False positive rate at the smallest threshold detecting at least
/// `tpr_target` of the OOD scores: τ is the largest score value with
/// `frac(ood >= τ) >= tpr_target`; returns `frac(id >= τ)`.
pub fn fpr_at_tpr(id_scores: &[f64], ood_scores: &[f64], tpr_target: f64) -> Result<f64> {
    check_scores("id", id_scores)?;
    check_scores("ood", ood_scores)?;
    if !(tpr_target > 0.0 && tpr_target <= 1.0) {
        return Err(HpmError::param("tpr_target", "must lie in (0, 1]"));
    }
    let n_ood = ood_scores.len();
    // smallest m with m/n >= target, robust to the f64 product rounding up
    let mut m = (tpr_target * n_ood as f64).ceil() as usize;
    m = m.clamp(1, n_ood);
    while m > 1 && (m - 1) as f64 / n_ood as f64 >= tpr_target {
        m -= 1;
    }
    while (m as f64 / n_ood as f64) < tpr_target && m < n_ood {
        m += 1;
    }

    let mut ood = ood_scores.to_vec();
    ood.sort_by(|a, b| f64::total_cmp(b, a));
    let tau = ood[m - 1];
    let fp = id_scores.iter().filter(|&&s| s >= tau).count();
    Ok(fp as f64 / id_scores.len() as f64)
}

fn check_scores(what: &str, scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(HpmError::EmptyScores { what: what.into() });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(HpmError::NonFinite {
            what: format!("{what} scores"),
        });
    }
    Ok(())
}

/// AUROC / FPR95 pair for one (ID, OOD) comparison. Values are stored in
/// [0, 1] and reported ×100.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct DetectionMetrics {
    pub auroc: f64,
    pub fpr95: f64,
    pub n_id: usize,
    pub n_ood: usize,
}

impl DetectionMetrics {
    pub fn compute(id_scores: &[f64], ood_scores: &[f64], tpr_target: f64) -> Result<Self> {
        Ok(DetectionMetrics {
            auroc: auroc(id_scores, ood_scores)?,
            fpr95: fpr_at_tpr(id_scores, ood_scores, tpr_target)?,
            n_id: id_scores.len(),
            n_ood: ood_scores.len(),
        })
    }
}

/// Unweighted mean of AUROC and FPR95 over OOD sets.
pub fn average_sets(per_set: &[DetectionMetrics]) -> Result<DetectionMetrics> {
    if per_set.is_empty() {
        return Err(HpmError::EmptyScores {
            what: "per-set metrics".into(),
        });
    }
    let n = per_set.len() as f64;
    Ok(DetectionMetrics {
        auroc: per_set.iter().map(|m| m.auroc).sum::<f64>() / n,
        fpr95: per_set.iter().map(|m| m.fpr95).sum::<f64>() / n,
        n_id: per_set[0].n_id,
        n_ood: per_set.iter().map(|m| m.n_ood).sum(),
    })
}

/// Log efficiency score `log₁₀(best_auroc / cost)` with AUROC on the 0–100
/// scale. Cost units are caller-supplied and echoed in reports.
pub fn les(best_auroc_percent: f64, cost: f64) -> Result<f64> {
    if best_auroc_percent <= 0.0 || !best_auroc_percent.is_finite() {
        return Err(HpmError::param("best_auroc", "must be positive and finite"));
    }
    if cost <= 0.0 || !cost.is_finite() {
        return Err(HpmError::param("cost", "must be positive and finite"));
    }
    Ok((best_auroc_percent / cost).log10())
}

/// Full evaluation result: per-set and averaged metrics per detector, the
/// best averaged AUROC, and optionally LES.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    pub model: String,
    /// Score orientation, stated in every report.
    pub orientation: String,
    /// OOD-set name → detector name → metrics (both sorted).
    pub per_set: BTreeMap<String, BTreeMap<String, DetectionMetrics>>,
    /// Detector name → unweighted mean over OOD sets.
    pub averaged: BTreeMap<String, DetectionMetrics>,
    pub best_detector: String,
    /// Max averaged AUROC over detectors, in [0, 1].
    pub best_auroc: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub les: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_unit: Option<String>,
    /// Optional closed-set accuracy passed through from upstream; never
    /// computed here.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acc: Option<f64>,
    /// Conventions that the underlying method leaves open, echoed so runs
    /// are interpretable.
    pub notes: BTreeMap<String, String>,
}

impl EvalReport {
    /// Assemble a report from per-set metrics. `per_set` maps OOD-set name
    /// → detector name → metrics; every set must cover the same detectors.
    pub fn assemble(
        model: &str,
        per_set: BTreeMap<String, BTreeMap<String, DetectionMetrics>>,
        cost: Option<f64>,
        cost_unit: Option<String>,
        acc: Option<f64>,
        notes: BTreeMap<String, String>,
    ) -> Result<EvalReport> {
        if per_set.is_empty() {
            return Err(HpmError::EmptyScores {
                what: "evaluation sets".into(),
            });
        }
        let detectors: Vec<String> = per_set
            .values()
            .next()
            .expect("nonempty checked")
            .keys()
            .cloned()
            .collect();
        if detectors.is_empty() {
            return Err(HpmError::EmptyScores {
                what: "detectors".into(),
            });
        }
        let mut averaged = BTreeMap::new();
        for det in &detectors {
            let mut ms = Vec::with_capacity(per_set.len());
            for (set, by_det) in &per_set {
                let m = by_det.get(det).ok_or_else(|| HpmError::EmptyScores {
                    what: format!("metrics for detector {det} on set {set}"),
                })?;
                ms.push(*m);
            }
            averaged.insert(det.clone(), average_sets(&ms)?);
        }
        let (best_detector, best_auroc) = averaged
            .iter()
            .fold(("", f64::NEG_INFINITY), |best, (name, m)| {
                if m.auroc > best.1 {
                    (name.as_str(), m.auroc)
                } else {
                    best
                }
            });
        let best_detector = best_detector.to_string();
        let les_value = match cost {
            Some(c) => Some(les(100.0 * best_auroc, c)?),
            None => None,
        };
        Ok(EvalReport {
            model: model.to_string(),
            orientation: crate::detectors::ORIENTATION.to_string(),
            per_set,
            averaged,
            best_detector,
            best_auroc,
            les: les_value,
            cost,
            cost_unit,
            acc,
            notes,
        })
    }
}
