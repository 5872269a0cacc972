//! Classifier row/null projectors and the diagnostics built on them:
//! absolute classifier-null scatter and per-class radius profiling.
//!
//! A linear head `f(h) = Wh + b` only sees the component of `h` in the row
//! space of `W`; variation in the null space leaves every logit unchanged.
//! The quantities here measure how much within-class variation hides there
//! and how feature radius tracks class frequency.

use ndarray::Array2;

use crate::bank::{ClassifierHead, FeatureBank, GroupSplit};
use crate::error::{HpmError, Result};
use crate::geometry::{class_covariance, CovarianceEstimate};
use crate::linalg;

/// Orthogonal projectors onto the classifier row space and its complement.
#[derive(Debug, Clone)]
pub struct Projectors {
    pub row: Array2<f64>,
    pub null: Array2<f64>,
    pub rank_row: usize,
}

/// Projectors via SVD of `W`, retaining singular values above
/// `1e-10 · σ_max`: `P_row = Σ v_i v_iᵀ`, `P_null = I − P_row`.
pub fn projectors(head: &ClassifierHead) -> Projectors {
    let d = head.d();
    let svd = linalg::svd(&head.weight().view());
    let smax = svd.s.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = 1e-10 * smax;

    let mut row = Array2::<f64>::zeros((d, d));
    let mut rank_row = 0;
    for (j, &sigma) in svd.s.iter().enumerate() {
        if sigma > cutoff && sigma > 0.0 {
            rank_row += 1;
            let v = svd.v.column(j);
            for a in 0..d {
                let va = v[a];
                if va == 0.0 {
                    continue;
                }
                for b in 0..d {
                    row[(a, b)] += va * v[b];
                }
            }
        }
    }
    // symmetrize against accumulation drift
    for a in 0..d {
        for b in (a + 1)..d {
            let m = 0.5 * (row[(a, b)] + row[(b, a)]);
            row[(a, b)] = m;
            row[(b, a)] = m;
        }
    }
    let mut null = -&row;
    for a in 0..d {
        null[(a, a)] += 1.0;
    }
    Projectors {
        row,
        null,
        rank_row,
    }
}

/// Absolute classifier-null scatter per class: `A_c = Tr(P_null Σ̂_c P_null)`,
/// with head/tail group means. Classes with fewer than two samples are
/// skipped and listed.
#[derive(Debug, Clone)]
pub struct NullScatterReport {
    /// Per-class scatter, `None` for skipped classes. Length K.
    pub per_class: Vec<Option<f64>>,
    pub skipped: Vec<usize>,
    /// Unweighted mean over reported head classes.
    pub head_avg: f64,
    /// Unweighted mean over reported tail classes.
    pub tail_avg: f64,
    pub split: GroupSplit,
}

/// Trace form: `Tr(P_null Σ P_null)`.
pub fn class_null_scatter_trace(cov: &CovarianceEstimate, proj: &Projectors) -> f64 {
    let pm = proj.null.dot(&cov.matrix).dot(&proj.null);
    pm.diag().sum()
}

/// Residual form: `1/(n_c−1) Σ_i ‖P_null (h_i − μ̂_c)‖²`.
pub fn class_null_scatter_residual(
    bank: &FeatureBank,
    class: usize,
    proj: &Projectors,
) -> Result<f64> {
    let groups = bank.class_indices_canonical();
    let group = groups
        .get(class)
        .ok_or_else(|| HpmError::param("class", format!("class {class} out of range")))?;
    if group.len() < 2 {
        return Err(HpmError::InsufficientClassSupport {
            class,
            count: group.len(),
        });
    }
    let d = bank.d();
    let mut mean = ndarray::Array1::<f64>::zeros(d);
    for &i in group {
        mean += &bank.row(i);
    }
    mean.mapv_inplace(|x| x / group.len() as f64);

    let mut total = 0.0;
    for &i in group {
        let r = &bank.row(i) - &mean;
        let pr = proj.null.dot(&r);
        total += pr.iter().map(|x| x * x).sum::<f64>();
    }
    Ok(total / (group.len() - 1) as f64)
}

/// Per-class null scatter with group means. Both the trace form and the
/// residual form are evaluated and cross-checked; the residual form is
/// reported.
pub fn null_scatter(
    bank: &FeatureBank,
    proj: &Projectors,
    split: &GroupSplit,
) -> Result<NullScatterReport> {
    let counts = bank.class_counts();
    let mut per_class = vec![None; bank.k()];
    let mut skipped = Vec::new();
    for c in 0..bank.k() {
        if counts[c] < 2 {
            skipped.push(c);
            continue;
        }
        let residual = class_null_scatter_residual(bank, c, proj)?;
        let cov = class_covariance(bank, c, false)?;
        let trace = class_null_scatter_trace(&cov, proj);
        debug_assert!(
            (residual - trace).abs() <= 1e-8 * residual.abs().max(1.0),
            "null-scatter forms disagree for class {c}: {residual} vs {trace}"
        );
        per_class[c] = Some(residual);
    }
    if skipped.len() == bank.k() {
        return Err(HpmError::EmptyScores {
            what: "null scatter: every class skipped (all have fewer than 2 samples)".into(),
        });
    }
    let group_mean = |classes: &std::collections::BTreeSet<usize>| {
        let vals: Vec<f64> = classes.iter().filter_map(|&c| per_class[c]).collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    Ok(NullScatterReport {
        head_avg: group_mean(&split.head_classes),
        tail_avg: group_mean(&split.tail_classes),
        per_class,
        skipped,
        split: split.clone(),
    })
}

/// Per-class mean feature norms with head/tail group means, for checking
/// how feature radius tracks class frequency.
#[derive(Debug, Clone)]
pub struct RadiusProfile {
    /// Mean `‖h_i‖₂` per class; `None` for empty classes. Length K.
    pub per_class_mean_norm: Vec<Option<f64>>,
    /// Unweighted mean over head classes with samples.
    pub head_mean: f64,
    /// Unweighted mean over tail classes with samples.
    pub tail_mean: f64,
    /// `tail_mean / head_mean` when the head mean is positive.
    pub tail_head_ratio: Option<f64>,
    pub split: GroupSplit,
}

pub fn radius_profile(bank: &FeatureBank, split: &GroupSplit) -> RadiusProfile {
    let groups = bank.class_indices();
    let per_class_mean_norm: Vec<Option<f64>> = groups
        .iter()
        .map(|group| {
            if group.is_empty() {
                None
            } else {
                let total: f64 = group
                    .iter()
                    .map(|&i| bank.row(i).iter().map(|x| x * x).sum::<f64>().sqrt())
                    .sum();
                Some(total / group.len() as f64)
            }
        })
        .collect();
    let group_mean = |classes: &std::collections::BTreeSet<usize>| {
        let vals: Vec<f64> = classes
            .iter()
            .filter_map(|&c| per_class_mean_norm[c])
            .collect();
        if vals.is_empty() {
            f64::NAN
        } else {
            vals.iter().sum::<f64>() / vals.len() as f64
        }
    };
    let head_mean = group_mean(&split.head_classes);
    let tail_mean = group_mean(&split.tail_classes);
    let tail_head_ratio = if head_mean > 0.0 {
        Some(tail_mean / head_mean)
    } else {
        None
    };
    RadiusProfile {
        per_class_mean_norm,
        head_mean,
        tail_mean,
        tail_head_ratio,
        split: split.clone(),
    }
}
