//! Run configuration: a JSON file merged with command-line overrides
//! (flags win), plus the CLI error type and its exit-code mapping.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::PathBuf;

use hpm_core::{Detector, HpmError};
use serde::{Deserialize, Serialize};

use crate::RunArgs;

/// On-disk configuration; every field optional so files can stay minimal.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub model: Option<String>,
    pub id_bank: Option<PathBuf>,
    pub id_eval: Option<PathBuf>,
    #[serde(default)]
    pub ood_banks: BTreeMap<String, PathBuf>,
    pub head: Option<PathBuf>,
    pub detectors: Option<Vec<String>>,
    pub lambda_rel: Option<f64>,
    pub temperature: Option<f64>,
    pub head_fraction: Option<f64>,
    pub tpr_target: Option<f64>,
    pub cost: Option<f64>,
    pub cost_unit: Option<String>,
    pub acc: Option<f64>,
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
}

/// Fully resolved run configuration with defaults applied.
#[derive(Debug, Clone)]
pub struct Config {
    pub model: String,
    pub id_bank: Option<PathBuf>,
    pub id_eval: Option<PathBuf>,
    /// OOD-set name → bank path, lexicographically ordered.
    pub ood_banks: BTreeMap<String, PathBuf>,
    pub head: Option<PathBuf>,
    pub detectors: Vec<Detector>,
    pub lambda_rel: f64,
    pub temperature: f64,
    pub head_fraction: f64,
    pub tpr_target: f64,
    pub cost: Option<f64>,
    pub cost_unit: Option<String>,
    pub acc: Option<f64>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub plots: bool,
}

impl Config {
    /// Load the optional config file and apply flag overrides; flags win.
    pub fn resolve(args: &RunArgs) -> Result<Config, CliError> {
        let file = match &args.config {
            Some(path) => {
                let raw = fs::read_to_string(path).map_err(|e| {
                    CliError::Core(HpmError::Io {
                        path: path.clone(),
                        source: e,
                    })
                })?;
                serde_json::from_str::<ConfigFile>(&raw).map_err(|e| {
                    CliError::usage(format!("invalid config {}: {e}", path.display()))
                })?
            }
            None => ConfigFile::default(),
        };

        let mut ood_banks = file.ood_banks;
        for entry in &args.ood_bank {
            let (name, path) = entry.split_once('=').ok_or_else(|| {
                CliError::usage(format!("--ood-bank expects name=path, got {entry:?}"))
            })?;
            ood_banks.insert(name.to_string(), PathBuf::from(path));
        }

        let detector_names: Option<Vec<String>> = match &args.detectors {
            Some(csv) => Some(csv.split(',').map(|s| s.trim().to_string()).collect()),
            None => file.detectors,
        };
        let detectors = match detector_names {
            Some(names) => {
                let mut out = Vec::with_capacity(names.len());
                for name in &names {
                    let det = Detector::parse(name).ok_or_else(|| {
                        CliError::usage(format!(
                            "unknown detector {name:?}; expected one of \
                             energy, msp, md, rp-md, hc-md, hpm"
                        ))
                    })?;
                    if !out.contains(&det) {
                        out.push(det);
                    }
                }
                if out.is_empty() {
                    return Err(CliError::usage("detector list is empty"));
                }
                out
            }
            None => Detector::ALL.to_vec(),
        };

        let out_dir = args
            .out
            .clone()
            .or(file.out_dir)
            .ok_or_else(|| CliError::usage("missing output directory: pass --out"))?;

        let lambda_rel = args.lambda_rel.or(file.lambda_rel).unwrap_or(1e-3);
        if lambda_rel <= 0.0 || lambda_rel.is_nan() {
            return Err(CliError::usage("--lambda-rel must be positive"));
        }
        let temperature = args.temperature.or(file.temperature).unwrap_or(1.0);
        if temperature <= 0.0 || temperature.is_nan() {
            return Err(CliError::usage("--temperature must be positive"));
        }
        let head_fraction = args.head_fraction.or(file.head_fraction).unwrap_or(0.5);
        if !(head_fraction > 0.0 && head_fraction < 1.0) {
            return Err(CliError::usage("--head-fraction must lie in (0, 1)"));
        }
        let tpr_target = args.tpr_target.or(file.tpr_target).unwrap_or(0.95);
        if !(tpr_target > 0.0 && tpr_target <= 1.0) {
            return Err(CliError::usage("--tpr-target must lie in (0, 1]"));
        }

        Ok(Config {
            model: args
                .model
                .clone()
                .or(file.model)
                .unwrap_or_else(|| "model".to_string()),
            id_bank: args.id_bank.clone().or(file.id_bank),
            id_eval: args.id_eval.clone().or(file.id_eval),
            ood_banks,
            head: args.head.clone().or(file.head),
            detectors,
            lambda_rel,
            temperature,
            head_fraction,
            tpr_target,
            cost: args.cost.or(file.cost),
            cost_unit: args.cost_unit.clone().or(file.cost_unit),
            acc: args.acc.or(file.acc),
            out_dir,
            seed: args.seed.or(file.seed).unwrap_or(0),
            plots: args.plots,
        })
    }

    pub fn require_id_bank(&self) -> Result<&PathBuf, CliError> {
        self.id_bank
            .as_ref()
            .ok_or_else(|| CliError::usage("missing ID bank: pass --id-bank or set id_bank"))
    }

    /// The bank scored as "id" in evaluations: `id_eval` when set, else the
    /// fit bank.
    pub fn eval_bank_path(&self) -> Result<&PathBuf, CliError> {
        match &self.id_eval {
            Some(p) => Ok(p),
            None => self.require_id_bank(),
        }
    }

    /// Directory expected to hold `head_w.bin` / `head_b.bin`: the explicit
    /// head path, else the ID bank directory.
    pub fn head_dir(&self) -> Option<PathBuf> {
        self.head
            .clone()
            .or_else(|| self.id_bank.clone())
    }

    pub fn metric_detectors(&self) -> Vec<hpm_core::Variant> {
        self.detectors
            .iter()
            .filter_map(|d| match d {
                Detector::Metric(v) => Some(*v),
                _ => None,
            })
            .collect()
    }

    /// Conventions echoed into reports.
    pub fn notes(&self) -> BTreeMap<String, String> {
        let mut notes = BTreeMap::new();
        notes.insert("orientation".into(), hpm_core::ORIENTATION.into());
        notes.insert("ood_positive_class".into(), "true".into());
        notes.insert("energy_temperature".into(), format!("{}", self.temperature));
        notes.insert("lambda_rel".into(), format!("{}", self.lambda_rel));
        notes.insert(
            "head_split".into(),
            format!(
                "top ceil({}*K) classes by count, ties by smaller id",
                self.head_fraction
            ),
        );
        notes.insert(
            "effective_rank".into(),
            "exp of the entropy of normalized eigenvalues".into(),
        );
        notes.insert("log_condition_base".into(), "natural log".into());
        notes.insert("seed".into(), format!("{}", self.seed));
        notes
    }
}

#[derive(Debug)]
pub enum CliError {
    Core(HpmError),
    Usage(String),
}

impl CliError {
    /// 1 for validation problems, 2 for operating-system i/o failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_io() => 2,
            _ => 1,
        }
    }

    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(m) => write!(f, "{m}"),
        }
    }
}

impl std::error::Error for CliError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CliError::Core(e) => std::error::Error::source(e),
            CliError::Usage(_) => None,
        }
    }
}

impl From<HpmError> for CliError {
    fn from(e: HpmError) -> Self {
        CliError::Core(e)
    }
}
