//! The six OOD scores: Energy, MSP, and the four Mahalanobis variants
//! (raw/hyperspherical features × class-specific/pooled covariance).
//!
//! Every score follows one orientation: larger means more OOD-like. MSP is
//! negated and Energy returned as-is so this holds everywhere.

use std::fmt;
use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::bank::FeatureBank;
use crate::error::{HpmError, Result};
use crate::fsio;
use crate::geometry::{
    self, class_covariance, class_means, factorize, pooled_covariance, project_sphere,
    CovarianceEstimate, PrecisionFactor,
};
use crate::par;

/// Score orientation used by every detector in this crate.
pub const ORIENTATION: &str = "larger_is_ood";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureSpace {
    Raw,
    Hyperspherical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovModel {
    ClassSpecific,
    Pooled,
}

/// A Mahalanobis-family detector configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Variant {
    pub feature: FeatureSpace,
    pub covariance: CovModel,
}

impl Variant {
    /// Raw features, class-specific covariance.
    pub const MAHALANOBIS: Variant = Variant {
        feature: FeatureSpace::Raw,
        covariance: CovModel::ClassSpecific,
    };
    /// Raw features, pooled covariance.
    pub const RP_MD: Variant = Variant {
        feature: FeatureSpace::Raw,
        covariance: CovModel::Pooled,
    };
    /// Hyperspherical features, class-specific covariance.
    pub const HC_MD: Variant = Variant {
        feature: FeatureSpace::Hyperspherical,
        covariance: CovModel::ClassSpecific,
    };
    /// Hyperspherical features, pooled covariance.
    pub const HPM: Variant = Variant {
        feature: FeatureSpace::Hyperspherical,
        covariance: CovModel::Pooled,
    };

    pub const ALL: [Variant; 4] = [
        Variant::MAHALANOBIS,
        Variant::RP_MD,
        Variant::HC_MD,
        Variant::HPM,
    ];

    pub fn name(&self) -> &'static str {
        match (self.feature, self.covariance) {
            (FeatureSpace::Raw, CovModel::ClassSpecific) => "md",
            (FeatureSpace::Raw, CovModel::Pooled) => "rp-md",
            (FeatureSpace::Hyperspherical, CovModel::ClassSpecific) => "hc-md",
            (FeatureSpace::Hyperspherical, CovModel::Pooled) => "hpm",
        }
    }

    pub fn parse(s: &str) -> Option<Variant> {
        match s {
            "md" | "mahalanobis" => Some(Variant::MAHALANOBIS),
            "rp-md" => Some(Variant::RP_MD),
            "hc-md" => Some(Variant::HC_MD),
            "hpm" => Some(Variant::HPM),
            _ => None,
        }
    }

    fn normalized(&self) -> bool {
        self.feature == FeatureSpace::Hyperspherical
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Any of the six supported detectors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Detector {
    Energy,
    Msp,
    Metric(Variant),
}

impl Detector {
    pub const ALL: [Detector; 6] = [
        Detector::Energy,
        Detector::Msp,
        Detector::Metric(Variant::MAHALANOBIS),
        Detector::Metric(Variant::RP_MD),
        Detector::Metric(Variant::HC_MD),
        Detector::Metric(Variant::HPM),
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Detector::Energy => "energy",
            Detector::Msp => "msp",
            Detector::Metric(v) => v.name(),
        }
    }

    pub fn parse(s: &str) -> Option<Detector> {
        match s {
            "energy" => Some(Detector::Energy),
            "msp" => Some(Detector::Msp),
            _ => Variant::parse(s).map(Detector::Metric),
        }
    }

    pub fn needs_logits(&self) -> bool {
        matches!(self, Detector::Energy | Detector::Msp)
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Ridge setting for covariance regularization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ridge {
    /// λ = value · trace/d (per covariance), falling back to the value
    /// itself on a zero-trace matrix.
    Relative(f64),
    /// λ added verbatim.
    Absolute(f64),
}

impl Ridge {
    pub const DEFAULT_REL: f64 = 1e-3;

    fn apply(&self, cov: &CovarianceEstimate) -> Result<CovarianceEstimate> {
        match *self {
            Ridge::Relative(v) => geometry::ridge(cov, v),
            Ridge::Absolute(v) => geometry::ridge_absolute(cov, v),
        }
    }
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(Ridge::DEFAULT_REL)
    }
}

/// Per-variant precision state: one shared factor for pooled variants, K
/// factors for class-specific ones.
#[derive(Debug, Clone)]
pub enum Precision {
    Pooled(PrecisionFactor),
    PerClass(Vec<PrecisionFactor>),
}

/// A fitted Mahalanobis-family detector: K anchors plus precision factors.
/// Immutable after fit; scoring is stateless.
#[derive(Debug, Clone)]
pub struct MetricModel {
    pub variant: Variant,
    /// K×d class anchors in the variant's coordinates.
    pub anchors: Array2<f64>,
    pub precision: Precision,
    pub ridge: Ridge,
}

impl MetricModel {
    pub fn k(&self) -> usize {
        self.anchors.nrows()
    }

    pub fn d(&self) -> usize {
        self.anchors.ncols()
    }
}

/// Fit a Mahalanobis-family detector with the default relative ridge rule.
pub fn fit_metric(bank: &FeatureBank, variant: Variant, lambda_rel: f64) -> Result<MetricModel> {
    fit_metric_with(bank, variant, Ridge::Relative(lambda_rel))
}

/// Fit with an explicit ridge setting. Class-specific variants apply the
/// same rule per class (relative λ uses that class's trace), since tail
/// covariances are singular without it.
pub fn fit_metric_with(bank: &FeatureBank, variant: Variant, ridge: Ridge) -> Result<MetricModel> {
    let normalized = variant.normalized();
    let stats = class_means(bank, normalized)?;
    let precision = match variant.covariance {
        CovModel::Pooled => {
            let cov = pooled_covariance(bank, &stats)?;
            Precision::Pooled(factorize(&ridge.apply(&cov)?)?)
        }
        CovModel::ClassSpecific => {
            let mut factors = Vec::with_capacity(bank.k());
            for c in 0..bank.k() {
                let cov = class_covariance(bank, c, normalized)?;
                factors.push(factorize(&ridge.apply(&cov)?)?);
            }
            Precision::PerClass(factors)
        }
    };
    Ok(MetricModel {
        variant,
        anchors: stats.means,
        precision,
        ridge,
    })
}

/// Score one query: minimum over classes of the variant's quadratic form.
pub fn score(model: &MetricModel, h: ArrayView1<f64>) -> Result<f64> {
    if h.len() != model.d() {
        return Err(HpmError::DimensionMismatch {
            what: "query feature".into(),
            expected: model.d(),
            actual: h.len(),
        });
    }
    let z;
    let q = if model.variant.normalized() {
        z = project_sphere(h)?;
        z.view()
    } else {
        h.view()
    };
    let mut best = f64::INFINITY;
    for c in 0..model.k() {
        let factor = match &model.precision {
            Precision::Pooled(p) => p,
            Precision::PerClass(ps) => &ps[c],
        };
        let v = geometry::quadform(q, model.anchors.row(c), factor);
        if v < best {
            best = v;
        }
    }
    Ok(best)
}

/// A vector of OOD scores tagged with its origin. Larger = more OOD-like.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSet {
    pub scores: Vec<f64>,
    pub detector: String,
    pub source: String,
}

impl ScoreSet {
    pub fn new(scores: Vec<f64>, detector: &str, source: &str) -> Result<Self> {
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(HpmError::NonFinite {
                what: format!("scores for {detector} on {source}"),
            });
        }
        Ok(Self {
            scores,
            detector: detector.to_string(),
            source: source.to_string(),
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Score every row of a feature matrix; order-preserving, errors carry the
/// offending row index.
pub fn score_batch(
    model: &MetricModel,
    features: ArrayView2<f64>,
    source: &str,
) -> Result<ScoreSet> {
    let results = par::map_indices(features.nrows(), |i| score(model, features.row(i)));
    let mut scores = Vec::with_capacity(features.nrows());
    for (row, r) in results.into_iter().enumerate() {
        match r {
            Ok(s) => scores.push(s),
            Err(e) => {
                return Err(HpmError::RowError {
                    row,
                    source: Box::new(e),
                })
            }
        }
    }
    ScoreSet::new(scores, model.variant.name(), source)
}

/// Energy score `−T·log Σ_k exp(f_k/T)`, max-shifted for overflow safety.
/// Returned directly: larger values are more OOD-like.
pub fn energy(logits: ArrayView1<f64>, temperature: f64) -> Result<f64> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(HpmError::param("temperature", "must be positive and finite"));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(HpmError::NonFinite {
            what: "logits".into(),
        });
    }
    if logits.is_empty() {
        return Err(HpmError::EmptyScores {
            what: "logits".into(),
        });
    }
    let scaled: Vec<f64> = logits.iter().map(|&f| f / temperature).collect();
    Ok(-temperature * logsumexp(&scaled))
}

/// Negated maximum softmax probability, so larger is more OOD-like.
pub fn msp(logits: ArrayView1<f64>) -> Result<f64> {
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(HpmError::NonFinite {
            what: "logits".into(),
        });
    }
    if logits.is_empty() {
        return Err(HpmError::EmptyScores {
            what: "logits".into(),
        });
    }
    let vals: Vec<f64> = logits.iter().copied().collect();
    let lse = logsumexp(&vals);
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(-((max - lse).exp()))
}

/// Row-wise energy over a logit matrix.
pub fn energy_batch(logits: ArrayView2<f64>, temperature: f64, source: &str) -> Result<ScoreSet> {
    if temperature <= 0.0 || !temperature.is_finite() {
        return Err(HpmError::param("temperature", "must be positive and finite"));
    }
    let vals = par::map_indices(logits.nrows(), |i| energy(logits.row(i), temperature));
    collect_rows(vals, "energy", source)
}

/// Row-wise negated MSP over a logit matrix.
pub fn msp_batch(logits: ArrayView2<f64>, source: &str) -> Result<ScoreSet> {
    let vals = par::map_indices(logits.nrows(), |i| msp(logits.row(i)));
    collect_rows(vals, "msp", source)
}

fn collect_rows(vals: Vec<Result<f64>>, detector: &str, source: &str) -> Result<ScoreSet> {
    let mut scores = Vec::with_capacity(vals.len());
    for (row, r) in vals.into_iter().enumerate() {
        match r {
            Ok(s) => scores.push(s),
            Err(e) => {
                return Err(HpmError::RowError {
                    row,
                    source: Box::new(e),
                })
            }
        }
    }
    ScoreSet::new(scores, detector, source)
}

fn logsumexp(vals: &[f64]) -> f64 {
    let max = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = vals.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

// --- persistence ---------------------------------------------------------

const METRIC_JSON: &str = "metric.json";
const ANCHORS_BIN: &str = "anchors.bin";
const PRECISION_BIN: &str = "precision_l.bin";

#[derive(Serialize, Deserialize)]
struct MetricManifest {
    variant: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_rel: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lambda_abs: Option<f64>,
    d: usize,
    k: usize,
    orientation: String,
    /// Ridge λ actually added per factor (1 entry pooled, K class-specific).
    lambda_applied: Vec<f64>,
}

/// Persist a fitted model: `metric.json` + `anchors.bin` (K·d f64 LE,
/// row-major) + `precision_l.bin` (d·d f64 lower-triangular blocks,
/// row-major; K consecutive blocks for class-specific variants).
pub fn save_model(model: &MetricModel, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| HpmError::io(dir, e))?;
    let (lambda_rel, lambda_abs) = match model.ridge {
        Ridge::Relative(v) => (Some(v), None),
        Ridge::Absolute(v) => (None, Some(v)),
    };
    let lambda_applied = match &model.precision {
        Precision::Pooled(p) => vec![p.lambda()],
        Precision::PerClass(ps) => ps.iter().map(|p| p.lambda()).collect(),
    };
    let manifest = MetricManifest {
        variant: model.variant.name().to_string(),
        lambda_rel,
        lambda_abs,
        d: model.d(),
        k: model.k(),
        orientation: ORIENTATION.to_string(),
        lambda_applied,
    };
    let json = serde_json::to_vec_pretty(&manifest).expect("manifest serialization");
    fsio::atomic_write(&dir.join(METRIC_JSON), &json)?;

    let mut anchors = Vec::with_capacity(model.anchors.len() * 8);
    for x in model.anchors.iter() {
        anchors.extend_from_slice(&x.to_le_bytes());
    }
    fsio::atomic_write(&dir.join(ANCHORS_BIN), &anchors)?;

    let mut blocks = Vec::new();
    let mut push_factor = |p: &PrecisionFactor| {
        for x in p.lower().iter() {
            blocks.extend_from_slice(&x.to_le_bytes());
        }
    };
    match &model.precision {
        Precision::Pooled(p) => push_factor(p),
        Precision::PerClass(ps) => ps.iter().for_each(push_factor),
    }
    fsio::atomic_write(&dir.join(PRECISION_BIN), &blocks)
}

/// Load a model saved by [`save_model`]; bit-exact round trip.
pub fn load_model(dir: &Path) -> Result<MetricModel> {
    let manifest_path = dir.join(METRIC_JSON);
    let raw = fs::read(&manifest_path).map_err(|e| HpmError::io(&manifest_path, e))?;
    let manifest: MetricManifest =
        serde_json::from_slice(&raw).map_err(|e| HpmError::Manifest {
            path: manifest_path.clone(),
            reason: e.to_string(),
        })?;
    let variant = Variant::parse(&manifest.variant).ok_or_else(|| HpmError::Manifest {
        path: manifest_path.clone(),
        reason: format!("unknown variant {:?}", manifest.variant),
    })?;
    let ridge = match (manifest.lambda_rel, manifest.lambda_abs) {
        (Some(v), _) => Ridge::Relative(v),
        (None, Some(v)) => Ridge::Absolute(v),
        (None, None) => {
            return Err(HpmError::Manifest {
                path: manifest_path.clone(),
                reason: "missing ridge setting".into(),
            })
        }
    };
    let (k, d) = (manifest.k, manifest.d);

    let anchors = read_f64_blob(&dir.join(ANCHORS_BIN), k * d)?;
    let anchors = Array2::from_shape_vec((k, d), anchors).expect("length checked");

    let n_factors = match variant.covariance {
        CovModel::Pooled => 1,
        CovModel::ClassSpecific => k,
    };
    if manifest.lambda_applied.len() != n_factors {
        return Err(HpmError::Manifest {
            path: manifest_path,
            reason: format!(
                "lambda_applied holds {} entries, expected {n_factors}",
                manifest.lambda_applied.len()
            ),
        });
    }
    let blob = read_f64_blob(&dir.join(PRECISION_BIN), n_factors * d * d)?;
    let mut factors = Vec::with_capacity(n_factors);
    for f in 0..n_factors {
        let block = &blob[f * d * d..(f + 1) * d * d];
        let lower = Array2::from_shape_vec((d, d), block.to_vec()).expect("length checked");
        factors.push(PrecisionFactor::from_parts(
            lower,
            manifest.lambda_applied[f],
        ));
    }
    let precision = match variant.covariance {
        CovModel::Pooled => Precision::Pooled(factors.pop().expect("one factor")),
        CovModel::ClassSpecific => Precision::PerClass(factors),
    };
    Ok(MetricModel {
        variant,
        anchors,
        precision,
        ridge,
    })
}

fn read_f64_blob(path: &Path, expected_values: usize) -> Result<Vec<f64>> {
    let bytes = fs::read(path).map_err(|e| HpmError::io(path, e))?;
    let expected_bytes = expected_values as u64 * 8;
    if bytes.len() as u64 != expected_bytes {
        return Err(HpmError::BlobLength {
            file: path.display().to_string(),
            expected: expected_bytes,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}
