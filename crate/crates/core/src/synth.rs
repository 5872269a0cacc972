//! Deterministic synthetic long-tailed feature banks.
//!
//! Class counts follow an exponential profile `n_c = max(2, round(n_max ·
//! ρ^{−c/(K−1)}))`. Class samples are drawn as `h = r·u`: a direction `u`
//! around a random class mean direction with spread σ and anisotropic
//! within-class covariance (eigenvalues decaying at the configured rate in a
//! random per-class frame), and a radius `r` following a logistic schedule
//! from 1 for the most frequent class up to `radius_coupling` for the
//! rarest, with mild lognormal jitter.
//!
//! OOD banks share the ID radius profile so detectors must separate by
//! direction, not norm:
//! - `shifted-gaussian`: directions around one random center direction;
//! - `uniform-sphere`: directions uniform on the sphere.
//!
//! Everything is seeded; a fixed seed reproduces banks bit-for-bit. Per-class
//! RNG streams keep the ID bank independent of the requested OOD kind.

use std::fmt;
use std::path::Path;

use ndarray::{Array1, Array2};
use rand::prelude::*;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::bank::{ClassifierHead, FeatureBank};
use crate::error::{HpmError, Result};
use crate::fsio;

/// Steepness of the logistic radius schedule; saturates the schedule near
/// the configured coupling for the rarest classes so measured tail/head
/// norm ratios land close to `radius_coupling`.
const RADIUS_STEEPNESS: f64 = 12.0;

/// Relative std-dev of the lognormal radius jitter.
const RADIUS_JITTER: f64 = 0.05;

/// Row scale of the generated classifier head.
const HEAD_SCALE: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OodKind {
    ShiftedGaussian,
    UniformSphere,
}

impl OodKind {
    pub fn parse(s: &str) -> Option<OodKind> {
        match s {
            "shifted-gaussian" => Some(OodKind::ShiftedGaussian),
            "uniform-sphere" => Some(OodKind::UniformSphere),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            OodKind::ShiftedGaussian => "shifted-gaussian",
            OodKind::UniformSphere => "uniform-sphere",
        }
    }

    /// Directory-friendly name (`ood_shifted_gaussian`).
    pub fn dir_name(&self) -> String {
        format!("ood_{}", self.name().replace('-', "_"))
    }
}

impl fmt::Display for OodKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Generator parameters.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthSpec {
    pub k: usize,
    pub d: usize,
    /// Sample count of the most frequent class.
    pub n_max: usize,
    /// Head-to-tail imbalance ratio ρ ≥ 1.
    pub imbalance_ratio: f64,
    /// Tail-norm inflation factor ≥ 1.
    pub radius_coupling: f64,
    /// Within-class spread σ of the direction noise.
    pub within_class_spread: f64,
    /// Eigenvalue decay rate of the within-class covariance (0 = isotropic).
    pub anisotropy: f64,
    pub ood_kind: OodKind,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(HpmError::param("k", "need at least two classes"));
        }
        if self.d < 2 {
            return Err(HpmError::param("d", "need at least two dimensions"));
        }
        if self.n_max < 2 {
            return Err(HpmError::param("n_max", "need at least two samples per class"));
        }
        if self.imbalance_ratio < 1.0 || !self.imbalance_ratio.is_finite() {
            return Err(HpmError::param("imbalance_ratio", "must be >= 1"));
        }
        if self.radius_coupling < 1.0 || !self.radius_coupling.is_finite() {
            return Err(HpmError::param("radius_coupling", "must be >= 1"));
        }
        if self.within_class_spread <= 0.0 || !self.within_class_spread.is_finite() {
            return Err(HpmError::param("within_class_spread", "must be positive"));
        }
        if self.anisotropy < 0.0 || !self.anisotropy.is_finite() {
            return Err(HpmError::param("anisotropy", "must be >= 0"));
        }
        Ok(())
    }

    /// `n_c = max(2, round(n_max · ρ^{−c/(K−1)}))`.
    pub fn class_counts(&self) -> Vec<usize> {
        (0..self.k)
            .map(|c| {
                let exponent = -(c as f64) / (self.k - 1) as f64;
                let raw = self.n_max as f64 * self.imbalance_ratio.powf(exponent);
                (raw.round() as usize).max(2)
            })
            .collect()
    }

    /// Radius schedule per class: logistic interpolation from 1 (most
    /// frequent) to `radius_coupling` (least frequent).
    pub fn radius_schedule(&self) -> Vec<f64> {
        (0..self.k)
            .map(|c| {
                let t = c as f64 / (self.k - 1) as f64;
                let gate = 1.0 / (1.0 + (-RADIUS_STEEPNESS * (t - 0.5)).exp());
                1.0 + (self.radius_coupling - 1.0) * gate
            })
            .collect()
    }
}

/// Ground-truth parameters written alongside generated banks so oracle
/// tests can compare estimates against the generator.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthTruth {
    pub spec: SynthSpec,
    pub counts: Vec<usize>,
    /// Unit mean direction per class, K×d row-major.
    pub class_directions: Vec<Vec<f64>>,
    pub radius_schedule: Vec<f64>,
    /// Mean of the radius schedule; the OOD radius scale.
    pub mean_radius: f64,
    /// Center direction of the shifted-Gaussian OOD cloud.
    pub ood_center: Option<Vec<f64>>,
    pub head_scale: f64,
}

/// A generated dataset: long-tailed ID fit bank, a balanced held-out ID
/// eval bank drawn from the same class parameters, a matching linear head,
/// and one OOD bank.
#[derive(Debug, Clone)]
pub struct SynthData {
    pub id: FeatureBank,
    pub id_eval: FeatureBank,
    pub head: ClassifierHead,
    pub ood: FeatureBank,
    pub truth: SynthTruth,
}

fn unit_gaussian(rng: &mut ChaCha12Rng, d: usize) -> Array1<f64> {
    loop {
        let v = Array1::from_shape_fn(d, |_| rng.sample::<f64, _>(StandardNormal));
        let norm = v.dot(&v).sqrt();
        if norm > 1e-8 {
            return v.mapv(|x| x / norm);
        }
    }
}

/// Random rotation via Gram-Schmidt on a Gaussian matrix.
fn random_rotation(rng: &mut ChaCha12Rng, d: usize) -> Array2<f64> {
    let mut q = Array2::from_shape_fn((d, d), |_| rng.sample::<f64, _>(StandardNormal));
    for j in 0..d {
        for i in 0..j {
            let proj = q.column(j).dot(&q.column(i));
            let col_i = q.column(i).to_owned();
            q.column_mut(j).zip_mut_with(&col_i, |x, &y| *x -= proj * y);
        }
        let n = q.column(j).dot(&q.column(j)).sqrt();
        q.column_mut(j).mapv_inplace(|x| x / n);
    }
    q
}

/// Generate the ID bank, classifier head, OOD bank, and ground truth.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    spec.validate()?;
    let (k, d) = (spec.k, spec.d);
    let counts = spec.class_counts();
    let radii = spec.radius_schedule();
    let n: usize = counts.iter().sum();

    // stream 0: global draws (class mean directions, then the OOD center)
    let mut global = ChaCha12Rng::seed_from_u64(spec.seed);
    global.set_stream(0);
    let mut dirs = Array2::<f64>::zeros((k, d));
    for c in 0..k {
        dirs.row_mut(c).assign(&unit_gaussian(&mut global, d));
    }
    let ood_center = unit_gaussian(&mut global, d);

    // per-class eigenvalue profile of the direction noise
    let weights: Vec<f64> = (0..d)
        .map(|j| (-spec.anisotropy * j as f64 / (d - 1) as f64 / 2.0).exp())
        .collect();

    // per-class rotation frames are distribution parameters shared by the
    // fit and eval banks; streams 1..=K draw them, and the fit samples
    // continue on the same streams
    let mut rotations = Vec::with_capacity(k);
    let mut fit_rngs = Vec::with_capacity(k);
    for c in 0..k {
        let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
        rng.set_stream(c as u64 + 1);
        rotations.push(random_rotation(&mut rng, d));
        fit_rngs.push(rng);
    }

    let draw_bank = |counts: &[usize], rngs: &mut [ChaCha12Rng]| -> Result<FeatureBank> {
        let total: usize = counts.iter().sum();
        let mut features = Array2::<f64>::zeros((total, d));
        let mut labels = Vec::with_capacity(total);
        let mut row = 0;
        for c in 0..k {
            let rng = &mut rngs[c];
            for _ in 0..counts[c] {
                let g = Array1::from_shape_fn(d, |j| {
                    weights[j] * rng.sample::<f64, _>(StandardNormal)
                });
                let x =
                    &dirs.row(c) + &rotations[c].dot(&g).mapv(|v| v * spec.within_class_spread);
                let norm = x.dot(&x).sqrt();
                let jitter: f64 = rng.sample(StandardNormal);
                let r = radii[c] * (RADIUS_JITTER * jitter).exp();
                features.row_mut(row).assign(&x.mapv(|v| v / norm * r));
                labels.push(c as u32);
                row += 1;
            }
        }
        FeatureBank::new(features, labels, k)
    };

    let id = draw_bank(&counts, &mut fit_rngs)?;

    // the held-out eval bank is balanced, like a typical test split, and
    // draws from its own streams
    let n_eval_per_class = (spec.n_max / 2).max(2);
    let eval_counts = vec![n_eval_per_class; k];
    let mut eval_rngs: Vec<ChaCha12Rng> = (0..k)
        .map(|c| {
            let mut rng = ChaCha12Rng::seed_from_u64(spec.seed);
            rng.set_stream(1 + k as u64 + c as u64);
            rng
        })
        .collect();
    let id_eval = draw_bank(&eval_counts, &mut eval_rngs)?;

    let mean_radius = radii.iter().sum::<f64>() / k as f64;
    let n_ood = id_eval.n();
    let mut ood_rng = ChaCha12Rng::seed_from_u64(spec.seed);
    ood_rng.set_stream(u64::MAX);
    let mut ood_features = Array2::<f64>::zeros((n_ood, d));
    for i in 0..n_ood {
        let g = Array1::from_shape_fn(d, |_| ood_rng.sample::<f64, _>(StandardNormal));
        let x = match spec.ood_kind {
            OodKind::ShiftedGaussian => {
                &ood_center + &g.mapv(|v| v * spec.within_class_spread)
            }
            OodKind::UniformSphere => g,
        };
        let norm = x.dot(&x).sqrt();
        let jitter: f64 = ood_rng.sample(StandardNormal);
        let r = mean_radius * (RADIUS_JITTER * jitter).exp();
        ood_features
            .row_mut(i)
            .assign(&x.mapv(|v| v / norm * r));
    }
    let ood = FeatureBank::new(ood_features, vec![0; n_ood], 1)?;

    // linear head aligned with class directions, prior-adjusted bias
    let w = dirs.mapv(|v| v * HEAD_SCALE);
    let b = Array1::from_shape_fn(k, |c| (counts[c] as f64 / n as f64).ln());
    let head = ClassifierHead::new(w, b)?;

    let truth = SynthTruth {
        spec: spec.clone(),
        counts,
        class_directions: dirs.rows().into_iter().map(|r| r.to_vec()).collect(),
        radius_schedule: radii,
        mean_radius,
        ood_center: match spec.ood_kind {
            OodKind::ShiftedGaussian => Some(ood_center.to_vec()),
            OodKind::UniformSphere => None,
        },
        head_scale: HEAD_SCALE,
    };

    Ok(SynthData {
        id,
        id_eval,
        head,
        ood,
        truth,
    })
}

/// Generate and write `<out>/id`, `<out>/id_eval`, `<out>/<ood_kind dir>`,
/// and `<out>/truth.json`. The head is stored inside the ID bank directory.
pub fn generate_to_dir(spec: &SynthSpec, out: &Path) -> Result<SynthData> {
    let data = generate(spec)?;
    let id_dir = out.join("id");
    data.id.save(&id_dir)?;
    data.head.save(&id_dir)?;
    data.id_eval.save(&out.join("id_eval"))?;
    data.ood.save(&out.join(spec.ood_kind.dir_name()))?;
    let json = serde_json::to_vec_pretty(&data.truth).expect("truth serialization");
    fsio::atomic_write(&out.join("truth.json"), &json)?;
    Ok(data)
}
