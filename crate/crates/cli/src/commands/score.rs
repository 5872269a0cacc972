use std::path::PathBuf;

use hpm_core::{
    energy_batch, load_model, msp_batch, report::write_score_csv, score_batch, ClassifierHead,
    Detector, FeatureBank, HpmError, LogitBank,
};

use crate::commands::{ensure_dir, model_dir, score_path};
use crate::config::{CliError, Config};

pub fn run(config: &Config) -> Result<(), CliError> {
    // banks to score: the eval ID bank plus every OOD set
    let mut banks: Vec<(String, PathBuf)> = vec![("id".into(), config.eval_bank_path()?.clone())];
    for (name, path) in &config.ood_banks {
        banks.push((name.clone(), path.clone()));
    }

    let needs_logits = config.detectors.iter().any(Detector::needs_logits);
    let head = if needs_logits {
        load_head(config)?
    } else {
        None
    };

    ensure_dir(&config.out_dir.join("scores"))?;
    for (bank_name, bank_path) in &banks {
        let bank = FeatureBank::load(bank_path)?;

        let logits = if needs_logits {
            Some(load_or_compute_logits(&bank, bank_path, head.as_ref())?)
        } else {
            None
        };

        for detector in &config.detectors {
            let set = match detector {
                Detector::Energy => energy_batch(
                    logits.as_ref().expect("logits prepared").matrix().view(),
                    config.temperature,
                    bank_name,
                )?,
                Detector::Msp => msp_batch(
                    logits.as_ref().expect("logits prepared").matrix().view(),
                    bank_name,
                )?,
                Detector::Metric(variant) => {
                    let dir = model_dir(config, variant.name());
                    if !dir.join("metric.json").is_file() {
                        return Err(CliError::usage(format!(
                            "no fitted model for {} at {}; run `hpm fit` first",
                            variant.name(),
                            dir.display()
                        )));
                    }
                    let model = load_model(&dir)?;
                    score_batch(&model, bank.features().view(), bank_name)?
                }
            };
            let path = score_path(config, detector.name(), bank_name);
            write_score_csv(&path, &set)?;
            println!(
                "scored {} on {}: {} rows -> {}",
                detector.name(),
                bank_name,
                set.len(),
                path.display()
            );
        }
    }
    Ok(())
}

fn load_head(config: &Config) -> Result<Option<ClassifierHead>, CliError> {
    let Some(dir) = config.head_dir() else {
        return Ok(None);
    };
    if !ClassifierHead::exists(&dir) {
        return Ok(None);
    }
    // head dimensions come from the fit bank's manifest
    let id = FeatureBank::load(config.require_id_bank()?)?;
    Ok(Some(ClassifierHead::load(&dir, id.k(), id.d())?))
}

fn load_or_compute_logits(
    bank: &FeatureBank,
    bank_path: &std::path::Path,
    head: Option<&ClassifierHead>,
) -> Result<LogitBank, CliError> {
    if LogitBank::exists(bank_path) {
        let k = head.map(ClassifierHead::k).unwrap_or_else(|| bank.k());
        return Ok(LogitBank::load(bank_path, bank.n(), k)?);
    }
    match head {
        Some(h) => Ok(h.logits(bank)?),
        None => Err(CliError::Core(HpmError::MissingLogits {
            what: format!(
                "energy/msp need logits.bin in {} or a classifier head \
                 (head_w.bin/head_b.bin; pass --head)",
                bank_path.display()
            ),
        })),
    }
}
