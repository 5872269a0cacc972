//! Feature-space geometry: hyperspherical projection, class means, class
//! and pooled covariance estimation, ridge regularization, Cholesky
//! precision factors, and covariance spectrum diagnostics.
//!
//! Covariances use unbiased denominators: `n_c − 1` per class, `N − K`
//! pooled. Estimates are symmetrized as `(A + Aᵀ)/2` after accumulation.
//! Accumulation walks rows in the bank's canonical class order with fixed
//! chunking, so results are bit-stable across thread counts and row
//! permutations.

use ndarray::{Array1, Array2, ArrayView1};

use crate::bank::FeatureBank;
use crate::error::{HpmError, Result};
use crate::linalg;
use crate::par;

/// Norm threshold below which a feature counts as degenerate for
/// hyperspherical projection.
pub const NORM_EPS: f64 = 1e-12;

/// Relative eigenvalue floor for conditioning diagnostics.
pub const SPECTRUM_FLOOR_REL: f64 = 1e-12;

/// Project a feature onto the unit sphere: `z = h / ‖h‖₂`.
pub fn project_sphere(h: ArrayView1<f64>) -> Result<Array1<f64>> {
    let norm = h.iter().map(|x| x * x).sum::<f64>().sqrt();
    if !norm.is_finite() || norm <= NORM_EPS {
        return Err(HpmError::DegenerateFeature { row: None });
    }
    Ok(h.mapv(|x| x / norm))
}

/// Per-class mean vectors, optionally of sphere-projected features.
#[derive(Debug, Clone)]
pub struct ClassStats {
    /// K×d matrix of class means.
    pub means: Array2<f64>,
    pub counts: Vec<usize>,
    /// True if means were taken over unit-normalized features.
    pub normalized: bool,
}

/// Arithmetic mean of each class's (optionally projected) features.
pub fn class_means(bank: &FeatureBank, normalized: bool) -> Result<ClassStats> {
    let d = bank.d();
    let groups = bank.class_indices_canonical();
    let counts: Vec<usize> = groups.iter().map(Vec::len).collect();
    for (c, &count) in counts.iter().enumerate() {
        if count == 0 {
            return Err(HpmError::EmptyClass { class: c });
        }
    }

    let rows = class_rows(bank, normalized)?;
    let mut means = Array2::<f64>::zeros((bank.k(), d));
    for (c, group) in groups.iter().enumerate() {
        let mut sum = Array1::<f64>::zeros(d);
        for &i in group {
            sum += &rows.row(i);
        }
        means
            .row_mut(c)
            .assign(&sum.mapv(|x| x / group.len() as f64));
    }
    Ok(ClassStats {
        means,
        counts,
        normalized,
    })
}

/// Which samples back a covariance estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CovKind {
    Class(usize),
    Pooled,
}

/// A symmetric PSD covariance estimate with its degrees of freedom and any
/// ridge already applied.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub matrix: Array2<f64>,
    pub kind: CovKind,
    pub dof: usize,
    /// Ridge λ already added to the diagonal; 0 for a raw estimate.
    pub ridge: f64,
}

impl CovarianceEstimate {
    pub fn d(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diag().sum()
    }
}

/// Unbiased sample covariance of one class, `1/(n_c−1) Σ (h−μ)(h−μ)ᵀ`.
pub fn class_covariance(
    bank: &FeatureBank,
    class: usize,
    normalized: bool,
) -> Result<CovarianceEstimate> {
    let groups = bank.class_indices_canonical();
    if class >= groups.len() {
        return Err(HpmError::param("class", format!("class {class} out of range")));
    }
    let group = &groups[class];
    if group.len() < 2 {
        return Err(HpmError::InsufficientClassSupport {
            class,
            count: group.len(),
        });
    }
    let rows = class_rows(bank, normalized)?;
    let d = bank.d();
    let mut mean = Array1::<f64>::zeros(d);
    for &i in group {
        mean += &rows.row(i);
    }
    mean.mapv_inplace(|x| x / group.len() as f64);

    let partials = par::map_chunks(group.len(), par::ROW_CHUNK, |range| {
        let mut acc = Array2::<f64>::zeros((d, d));
        for gi in range {
            let r = &rows.row(group[gi]) - &mean;
            accumulate_outer(&mut acc, &r.view());
        }
        acc
    });
    let mut scatter = Array2::<f64>::zeros((d, d));
    for p in partials {
        scatter += &p;
    }
    scatter.mapv_inplace(|x| x / (group.len() - 1) as f64);
    symmetrize(&mut scatter);
    Ok(CovarianceEstimate {
        matrix: scatter,
        kind: CovKind::Class(class),
        dof: group.len() - 1,
        ridge: 0.0,
    })
}

/// Pooled within-class covariance with shared degrees of freedom `N − K`:
/// `1/(N−K) Σ_c Σ_{i: y_i=c} (h_i−μ_c)(h_i−μ_c)ᵀ`. Coordinates (raw or
/// hyperspherical) follow `means.normalized`.
pub fn pooled_covariance(bank: &FeatureBank, means: &ClassStats) -> Result<CovarianceEstimate> {
    let n = bank.n();
    let k = bank.k();
    let d = bank.d();
    if n <= k {
        return Err(HpmError::TooFewSamples { n, k });
    }
    if means.means.dim() != (k, d) {
        return Err(HpmError::DimensionMismatch {
            what: "class means".into(),
            expected: k * d,
            actual: means.means.len(),
        });
    }
    let groups = bank.class_indices_canonical();
    for (c, group) in groups.iter().enumerate() {
        if group.len() < 2 {
            return Err(HpmError::InsufficientClassSupport {
                class: c,
                count: group.len(),
            });
        }
    }
    let rows = class_rows(bank, means.normalized)?;

    // flatten the canonical order so chunks can span class boundaries
    let flat: Vec<usize> = groups.iter().flatten().copied().collect();
    let labels = bank.labels();
    let partials = par::map_chunks(flat.len(), par::ROW_CHUNK, |range| {
        let mut acc = Array2::<f64>::zeros((d, d));
        for fi in range {
            let i = flat[fi];
            let c = labels[i] as usize;
            let r = &rows.row(i) - &means.means.row(c);
            accumulate_outer(&mut acc, &r.view());
        }
        acc
    });
    let mut scatter = Array2::<f64>::zeros((d, d));
    for p in partials {
        scatter += &p;
    }
    scatter.mapv_inplace(|x| x / (n - k) as f64);
    symmetrize(&mut scatter);
    Ok(CovarianceEstimate {
        matrix: scatter,
        kind: CovKind::Pooled,
        dof: n - k,
        ridge: 0.0,
    })
}

/// Add a ridge relative to the mean eigenvalue: `λ = λ_rel · trace/d` when
/// the trace is positive, else `λ = λ_rel`.
pub fn ridge(cov: &CovarianceEstimate, lambda_rel: f64) -> Result<CovarianceEstimate> {
    if lambda_rel <= 0.0 || !lambda_rel.is_finite() {
        return Err(HpmError::param("lambda_rel", "must be positive and finite"));
    }
    let tr = cov.trace();
    let lambda = if tr > 0.0 {
        lambda_rel * tr / cov.d() as f64
    } else {
        lambda_rel
    };
    Ok(ridge_with(cov, lambda))
}

/// Add an absolute ridge `λ` to the diagonal.
pub fn ridge_absolute(cov: &CovarianceEstimate, lambda: f64) -> Result<CovarianceEstimate> {
    if lambda <= 0.0 || !lambda.is_finite() {
        return Err(HpmError::param("lambda", "must be positive and finite"));
    }
    Ok(ridge_with(cov, lambda))
}

fn ridge_with(cov: &CovarianceEstimate, lambda: f64) -> CovarianceEstimate {
    let mut matrix = cov.matrix.clone();
    for i in 0..matrix.nrows() {
        matrix[(i, i)] += lambda;
    }
    CovarianceEstimate {
        matrix,
        kind: cov.kind,
        dof: cov.dof,
        ridge: cov.ridge + lambda,
    }
}

/// Lower-triangular Cholesky factor of a (ridge-regularized) covariance,
/// used to evaluate Mahalanobis quadratic forms by triangular solves.
#[derive(Debug, Clone)]
pub struct PrecisionFactor {
    lower: Array2<f64>,
    lambda: f64,
}

impl PrecisionFactor {
    pub fn lower(&self) -> &Array2<f64> {
        &self.lower
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn d(&self) -> usize {
        self.lower.nrows()
    }

    pub(crate) fn from_parts(lower: Array2<f64>, lambda: f64) -> Self {
        Self { lower, lambda }
    }
}

/// Cholesky-factorize a positive-definite covariance.
pub fn factorize(cov: &CovarianceEstimate) -> Result<PrecisionFactor> {
    let lower = linalg::cholesky(&cov.matrix.view()).ok_or(HpmError::FactorizationFailed)?;
    Ok(PrecisionFactor {
        lower,
        lambda: cov.ridge,
    })
}

/// Mahalanobis quadratic form `(x−μ)ᵀ Σ⁻¹ (x−μ)` evaluated as `‖L⁻¹(x−μ)‖²`.
pub fn quadform(x: ArrayView1<f64>, mu: ArrayView1<f64>, p: &PrecisionFactor) -> f64 {
    let r = &x - &mu;
    let y = linalg::forward_substitute(&p.lower.view(), &r.view());
    y.iter().map(|v| v * v).sum()
}

/// Eigenvalue summary of a covariance: entropy-based effective rank and the
/// natural-log condition number over eigenvalues above a relative floor.
#[derive(Debug, Clone)]
pub struct SpectrumDiagnostics {
    /// Eigenvalues sorted descending, clipped below at zero.
    pub eigenvalues: Array1<f64>,
    /// `exp(−Σ p_i ln p_i)` with `p_i = λ_i / Σλ_j` over eigenvalues above
    /// the floor; 1 for the all-zero matrix.
    pub effective_rank: f64,
    /// `ln(λ_max / λ_min-above-floor)`; 0 for the all-zero matrix.
    pub log_condition: f64,
}

/// Spectrum diagnostics of a symmetric covariance estimate.
pub fn spectrum(cov: &CovarianceEstimate) -> SpectrumDiagnostics {
    let eig = linalg::eigh(&cov.matrix.view());
    let eigenvalues = eig.values.mapv(|x| x.max(0.0));
    summarize_spectrum(eigenvalues)
}

pub(crate) fn summarize_spectrum(eigenvalues: Array1<f64>) -> SpectrumDiagnostics {
    let max = eigenvalues.iter().cloned().fold(0.0_f64, f64::max);
    if max <= 0.0 {
        return SpectrumDiagnostics {
            eigenvalues,
            effective_rank: 1.0,
            log_condition: 0.0,
        };
    }
    let floor = SPECTRUM_FLOOR_REL * max;
    let kept: Vec<f64> = eigenvalues.iter().cloned().filter(|&x| x > floor).collect();
    let total: f64 = kept.iter().sum();
    let entropy: f64 = kept
        .iter()
        .map(|&x| {
            let p = x / total;
            -p * p.ln()
        })
        .sum();
    let min_kept = kept.iter().cloned().fold(f64::INFINITY, f64::min);
    SpectrumDiagnostics {
        eigenvalues,
        effective_rank: entropy.exp(),
        log_condition: (max / min_kept).ln(),
    }
}

/// Materialize rows in the requested coordinates (raw or unit-normalized),
/// reporting the offending row on degenerate input.
fn class_rows(bank: &FeatureBank, normalized: bool) -> Result<Array2<f64>> {
    if !normalized {
        return Ok(bank.features().clone());
    }
    let n = bank.n();
    let projected = par::map_indices(n, |i| {
        project_sphere(bank.row(i)).map_err(|_| HpmError::DegenerateFeature { row: Some(i) })
    });
    let mut out = Array2::<f64>::zeros((n, bank.d()));
    for (i, r) in projected.into_iter().enumerate() {
        out.row_mut(i).assign(&r?);
    }
    Ok(out)
}

fn accumulate_outer(acc: &mut Array2<f64>, r: &ArrayView1<f64>) {
    let d = r.len();
    for i in 0..d {
        let ri = r[i];
        if ri == 0.0 {
            continue;
        }
        for j in 0..d {
            acc[(i, j)] += ri * r[j];
        }
    }
}

fn symmetrize(a: &mut Array2<f64>) {
    let n = a.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = m;
            a[(j, i)] = m;
        }
    }
}
