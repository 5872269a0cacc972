//! Feature banks, classifier heads, and their on-disk FBANK format.
//!
//! An FBANK directory holds:
//! - `manifest.json`: `{"version":1,"n":N,"d":d,"k":K,"dtype":"f32le","order":"row-major"}`
//!   plus optional `class_names`;
//! - `features.bin`: N·d float32 little-endian values, row-major, no header;
//! - `labels.bin`: N uint32 little-endian values;
//! - optional `logits.bin` (N·K f32), `head_w.bin` (K·d f32 row-major) and
//!   `head_b.bin` (K f32).
//!
//! A directory (or file) with `features.csv` instead is parsed as a CSV
//! fallback: d numeric columns plus a final `label` column.
//!
//! Storage is float32; all in-memory computation is float64.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::error::{HpmError, Result};
use crate::fsio;

const MANIFEST: &str = "manifest.json";
const FEATURES_BIN: &str = "features.bin";
const LABELS_BIN: &str = "labels.bin";
const LOGITS_BIN: &str = "logits.bin";
const HEAD_W_BIN: &str = "head_w.bin";
const HEAD_B_BIN: &str = "head_b.bin";
const FEATURES_CSV: &str = "features.csv";

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    n: usize,
    d: usize,
    k: usize,
    dtype: String,
    order: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    class_names: Option<Vec<String>>,
}

/// An N×d feature matrix with integer class labels in `[0, K)`.
///
/// Immutable after construction; cheap to share across threads.
#[derive(Debug, Clone)]
pub struct FeatureBank {
    features: Array2<f64>,
    labels: Vec<u32>,
    k: usize,
    class_names: Option<Vec<String>>,
}

impl FeatureBank {
    pub fn new(features: Array2<f64>, labels: Vec<u32>, k: usize) -> Result<Self> {
        let n = features.nrows();
        if n == 0 {
            return Err(HpmError::EmptyBank);
        }
        if labels.len() != n {
            return Err(HpmError::DimensionMismatch {
                what: "labels".into(),
                expected: n,
                actual: labels.len(),
            });
        }
        if k == 0 {
            return Err(HpmError::param("k", "class count must be positive"));
        }
        if n < k {
            return Err(HpmError::TooFewSamples { n, k });
        }
        for (row, &label) in labels.iter().enumerate() {
            if label as usize >= k {
                return Err(HpmError::LabelOutOfRange { row, label, k });
            }
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(HpmError::NonFinite {
                what: "features".into(),
            });
        }
        Ok(Self {
            features,
            labels,
            k,
            class_names: None,
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.k {
            return Err(HpmError::DimensionMismatch {
                what: "class_names".into(),
                expected: self.k,
                actual: names.len(),
            });
        }
        self.class_names = Some(names);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.features.nrows()
    }

    pub fn d(&self) -> usize {
        self.features.ncols()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    /// Per-class sample counts; sums to N.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.k];
        for &label in &self.labels {
            counts[label as usize] += 1;
        }
        counts
    }

    /// Row indices grouped by class, in row order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut idx = vec![Vec::new(); self.k];
        for (i, &label) in self.labels.iter().enumerate() {
            idx[label as usize].push(i);
        }
        idx
    }

    /// Row indices grouped by class, each class sorted by row content
    /// (lexicographic over coordinates). Estimators accumulate in this order,
    /// which makes fitted statistics bit-identical under any row permutation
    /// of the bank.
    pub fn class_indices_canonical(&self) -> Vec<Vec<usize>> {
        let mut groups = self.class_indices();
        for group in &mut groups {
            group.sort_by(|&a, &b| {
                let ra = self.features.row(a);
                let rb = self.features.row(b);
                for (x, y) in ra.iter().zip(rb.iter()) {
                    let ord = x.total_cmp(y);
                    if ord != std::cmp::Ordering::Equal {
                        return ord;
                    }
                }
                std::cmp::Ordering::Equal
            });
        }
        groups
    }

    /// Write the bank as an FBANK directory. Round-trips bit-exactly at
    /// float32 storage precision.
    pub fn save(&self, dir: &Path) -> Result<()> {
        if self.n() == 0 {
            return Err(HpmError::EmptyBank);
        }
        fs::create_dir_all(dir).map_err(|e| HpmError::io(dir, e))?;
        let manifest = Manifest {
            version: 1,
            n: self.n(),
            d: self.d(),
            k: self.k,
            dtype: "f32le".into(),
            order: "row-major".into(),
            class_names: self.class_names.clone(),
        };
        let json = serde_json::to_vec_pretty(&manifest).expect("manifest serialization");
        fsio::atomic_write(&dir.join(MANIFEST), &json)?;

        let mut feat_bytes = Vec::with_capacity(self.n() * self.d() * 4);
        for x in self.features.iter() {
            feat_bytes.extend_from_slice(&(*x as f32).to_le_bytes());
        }
        fsio::atomic_write(&dir.join(FEATURES_BIN), &feat_bytes)?;

        let mut label_bytes = Vec::with_capacity(self.n() * 4);
        for &l in &self.labels {
            label_bytes.extend_from_slice(&l.to_le_bytes());
        }
        fsio::atomic_write(&dir.join(LABELS_BIN), &label_bytes)?;
        Ok(())
    }

    /// Load a bank from an FBANK directory, or from `features.csv` (in a
    /// directory or given directly as a file path).
    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(HpmError::Manifest {
                path: path.to_path_buf(),
                reason: "bank path does not exist".into(),
            });
        }
        if path.is_file() {
            return Self::load_csv(path);
        }
        let manifest_path = path.join(MANIFEST);
        if manifest_path.is_file() {
            return Self::load_binary(path);
        }
        let csv_path = path.join(FEATURES_CSV);
        if csv_path.is_file() {
            return Self::load_csv(&csv_path);
        }
        Err(HpmError::Manifest {
            path: manifest_path,
            reason: "missing manifest.json (and no features.csv fallback)".into(),
        })
    }

    fn load_binary(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join(MANIFEST);
        let raw = fs::read(&manifest_path).map_err(|e| HpmError::io(&manifest_path, e))?;
        let manifest: Manifest =
            serde_json::from_slice(&raw).map_err(|e| HpmError::Manifest {
                path: manifest_path.clone(),
                reason: e.to_string(),
            })?;
        if manifest.version != 1 {
            return Err(HpmError::Manifest {
                path: manifest_path.clone(),
                reason: format!("unsupported version {}", manifest.version),
            });
        }
        if manifest.dtype != "f32le" || manifest.order != "row-major" {
            return Err(HpmError::Manifest {
                path: manifest_path,
                reason: format!(
                    "unsupported dtype/order {}/{}",
                    manifest.dtype, manifest.order
                ),
            });
        }

        let feats = read_f32_blob(&dir.join(FEATURES_BIN), manifest.n * manifest.d)?;
        let labels = read_u32_blob(&dir.join(LABELS_BIN), manifest.n)?;
        let features = Array2::from_shape_vec(
            (manifest.n, manifest.d),
            feats.into_iter().map(f64::from).collect(),
        )
        .expect("shape checked against blob length");
        let mut bank = Self::new(features, labels, manifest.k)?;
        if let Some(names) = manifest.class_names {
            bank = bank.with_class_names(names)?;
        }
        Ok(bank)
    }

    fn load_csv(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| HpmError::io(path, e))?;
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut labels: Vec<u32> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() < 2 {
                return Err(HpmError::Manifest {
                    path: path.to_path_buf(),
                    reason: format!("line {}: need at least one feature and a label", lineno + 1),
                });
            }
            // a non-numeric first field on the first data line is a header
            if rows.is_empty() && labels.is_empty() && fields[0].parse::<f64>().is_err() {
                continue;
            }
            let mut row = Vec::with_capacity(fields.len() - 1);
            for f in &fields[..fields.len() - 1] {
                let v: f64 = f.parse().map_err(|_| HpmError::Manifest {
                    path: path.to_path_buf(),
                    reason: format!("line {}: bad feature value {f:?}", lineno + 1),
                })?;
                row.push(v);
            }
            let label: u32 = fields[fields.len() - 1]
                .parse()
                .map_err(|_| HpmError::Manifest {
                    path: path.to_path_buf(),
                    reason: format!(
                        "line {}: bad label {:?}",
                        lineno + 1,
                        fields[fields.len() - 1]
                    ),
                })?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(HpmError::Manifest {
                        path: path.to_path_buf(),
                        reason: format!("line {}: ragged row", lineno + 1),
                    });
                }
            }
            rows.push(row);
            labels.push(label);
        }
        if rows.is_empty() {
            return Err(HpmError::EmptyBank);
        }
        let d = rows[0].len();
        let n = rows.len();
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        let features = Array2::from_shape_vec((n, d), flat).expect("ragged rows rejected above");
        let k = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(1);
        Self::new(features, labels, k)
    }
}

fn read_f32_blob(path: &Path, expected_values: usize) -> Result<Vec<f32>> {
    let bytes = fs::read(path).map_err(|e| HpmError::io(path, e))?;
    let expected_bytes = expected_values as u64 * 4;
    if bytes.len() as u64 != expected_bytes {
        return Err(HpmError::BlobLength {
            file: path.display().to_string(),
            expected: expected_bytes,
            actual: bytes.len() as u64,
        });
    }
    let mut out = Vec::with_capacity(expected_values);
    for chunk in bytes.chunks_exact(4) {
        let v = f32::from_le_bytes([chunk[0], chunk[1], chunk[2], chunk[3]]);
        if !v.is_finite() {
            return Err(HpmError::NonFinite {
                what: path.display().to_string(),
            });
        }
        out.push(v);
    }
    Ok(out)
}

fn read_u32_blob(path: &Path, expected_values: usize) -> Result<Vec<u32>> {
    let bytes = fs::read(path).map_err(|e| HpmError::io(path, e))?;
    let expected_bytes = expected_values as u64 * 4;
    if bytes.len() as u64 != expected_bytes {
        return Err(HpmError::BlobLength {
            file: path.display().to_string(),
            expected: expected_bytes,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

/// A linear classifier `f(h) = W·h + b` with `W: K×d`, `b: K`.
#[derive(Debug, Clone)]
pub struct ClassifierHead {
    w: Array2<f64>,
    b: Array1<f64>,
}

impl ClassifierHead {
    pub fn new(w: Array2<f64>, b: Array1<f64>) -> Result<Self> {
        if w.nrows() != b.len() {
            return Err(HpmError::DimensionMismatch {
                what: "head bias".into(),
                expected: w.nrows(),
                actual: b.len(),
            });
        }
        if w.iter().any(|x| !x.is_finite()) || b.iter().any(|x| !x.is_finite()) {
            return Err(HpmError::NonFinite {
                what: "classifier head".into(),
            });
        }
        Ok(Self { w, b })
    }

    pub fn k(&self) -> usize {
        self.w.nrows()
    }

    pub fn d(&self) -> usize {
        self.w.ncols()
    }

    pub fn weight(&self) -> &Array2<f64> {
        &self.w
    }

    pub fn bias(&self) -> &Array1<f64> {
        &self.b
    }

    /// Logits for a single feature vector.
    pub fn logits_one(&self, h: ArrayView1<f64>) -> Result<Array1<f64>> {
        if h.len() != self.d() {
            return Err(HpmError::DimensionMismatch {
                what: "feature".into(),
                expected: self.d(),
                actual: h.len(),
            });
        }
        Ok(self.w.dot(&h) + &self.b)
    }

    /// Logits for every row of a bank.
    pub fn logits(&self, bank: &FeatureBank) -> Result<LogitBank> {
        if bank.d() != self.d() {
            return Err(HpmError::DimensionMismatch {
                what: "head width".into(),
                expected: bank.d(),
                actual: self.d(),
            });
        }
        LogitBank::new(bank.features().dot(&self.w.t()) + &self.b)
    }

    /// Write `head_w.bin` / `head_b.bin` into an FBANK directory.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| HpmError::io(dir, e))?;
        let mut wb = Vec::with_capacity(self.w.len() * 4);
        for x in self.w.iter() {
            wb.extend_from_slice(&(*x as f32).to_le_bytes());
        }
        fsio::atomic_write(&dir.join(HEAD_W_BIN), &wb)?;
        let mut bb = Vec::with_capacity(self.b.len() * 4);
        for x in self.b.iter() {
            bb.extend_from_slice(&(*x as f32).to_le_bytes());
        }
        fsio::atomic_write(&dir.join(HEAD_B_BIN), &bb)?;
        Ok(())
    }

    /// Load a head stored alongside a bank. `k` and `d` come from the bank
    /// manifest.
    pub fn load(dir: &Path, k: usize, d: usize) -> Result<Self> {
        let w = read_f32_blob(&dir.join(HEAD_W_BIN), k * d)?;
        let b = read_f32_blob(&dir.join(HEAD_B_BIN), k)?;
        let w = Array2::from_shape_vec((k, d), w.into_iter().map(f64::from).collect())
            .expect("shape checked against blob length");
        let b = Array1::from_iter(b.into_iter().map(f64::from));
        Self::new(w, b)
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join(HEAD_W_BIN).is_file() && dir.join(HEAD_B_BIN).is_file()
    }
}

/// Precomputed logits, N×K.
#[derive(Debug, Clone)]
pub struct LogitBank {
    logits: Array2<f64>,
}

impl LogitBank {
    pub fn new(logits: Array2<f64>) -> Result<Self> {
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(HpmError::NonFinite {
                what: "logits".into(),
            });
        }
        Ok(Self { logits })
    }

    pub fn n(&self) -> usize {
        self.logits.nrows()
    }

    pub fn k(&self) -> usize {
        self.logits.ncols()
    }

    pub fn matrix(&self) -> &Array2<f64> {
        &self.logits
    }

    pub fn exists(dir: &Path) -> bool {
        dir.join(LOGITS_BIN).is_file()
    }

    pub fn load(dir: &Path, n: usize, k: usize) -> Result<Self> {
        let raw = read_f32_blob(&dir.join(LOGITS_BIN), n * k)?;
        let logits = Array2::from_shape_vec((n, k), raw.into_iter().map(f64::from).collect())
            .expect("shape checked against blob length");
        Self::new(logits)
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| HpmError::io(dir, e))?;
        let mut bytes = Vec::with_capacity(self.logits.len() * 4);
        for x in self.logits.iter() {
            bytes.extend_from_slice(&(*x as f32).to_le_bytes());
        }
        fsio::atomic_write(&dir.join(LOGITS_BIN), &bytes)
    }
}

/// A disjoint, exhaustive split of class ids into head and tail groups.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct GroupSplit {
    pub head_classes: BTreeSet<usize>,
    pub tail_classes: BTreeSet<usize>,
    /// Human-readable description of how the split was made.
    pub rule: String,
}

impl GroupSplit {
    pub fn is_head(&self, class: usize) -> bool {
        self.head_classes.contains(&class)
    }
}

/// Split classes into head/tail by sample count: the `⌈head_fraction·K⌉`
/// most frequent classes are head, ties broken by smaller class id.
pub fn split_head_tail(counts: &[usize], head_fraction: f64) -> Result<GroupSplit> {
    let k = counts.len();
    if k < 2 {
        return Err(HpmError::param("counts", "need at least two classes"));
    }
    if !(head_fraction > 0.0 && head_fraction < 1.0) {
        return Err(HpmError::param("head_fraction", "must lie in (0, 1)"));
    }
    let n_head = ((head_fraction * k as f64).ceil() as usize).clamp(1, k - 1);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| counts[b].cmp(&counts[a]).then(a.cmp(&b)));
    let head_classes: BTreeSet<usize> = order[..n_head].iter().copied().collect();
    let tail_classes: BTreeSet<usize> = order[n_head..].iter().copied().collect();
    Ok(GroupSplit {
        head_classes,
        tail_classes,
        rule: format!("top ceil({head_fraction}*{k}) classes by count, ties by smaller id"),
    })
}
