use std::collections::BTreeMap;

use hpm_core::report::{
    read_score_csv, write_les_csv, write_report_csv, write_report_json,
};
use hpm_core::{DetectionMetrics, EvalReport};

use crate::commands::score_path;
use crate::config::{CliError, Config};

pub fn run(config: &Config) -> Result<(), CliError> {
    if config.ood_banks.is_empty() {
        return Err(CliError::usage(
            "eval needs at least one OOD set: pass --ood-bank name=path or set ood_banks",
        ));
    }

    // check everything up front so missing score files are enumerated
    let mut missing = Vec::new();
    for detector in &config.detectors {
        for bank in std::iter::once("id".to_string()).chain(config.ood_banks.keys().cloned()) {
            let path = score_path(config, detector.name(), &bank);
            if !path.is_file() {
                missing.push(path.display().to_string());
            }
        }
    }
    if !missing.is_empty() {
        return Err(CliError::usage(format!(
            "missing score files (run `hpm score` first):\n  {}",
            missing.join("\n  ")
        )));
    }

    let mut per_set: BTreeMap<String, BTreeMap<String, DetectionMetrics>> = BTreeMap::new();
    for detector in &config.detectors {
        let id_scores = read_score_csv(&score_path(config, detector.name(), "id"))?;
        for set_name in config.ood_banks.keys() {
            let ood_scores = read_score_csv(&score_path(config, detector.name(), set_name))?;
            let metrics = DetectionMetrics::compute(
                &id_scores.scores,
                &ood_scores.scores,
                config.tpr_target,
            )?;
            per_set
                .entry(set_name.clone())
                .or_default()
                .insert(detector.name().to_string(), metrics);
        }
    }

    let report = EvalReport::assemble(
        &config.model,
        per_set,
        config.cost,
        config.cost_unit.clone(),
        config.acc,
        config.notes(),
    )?;

    write_report_json(&config.out_dir.join("report.json"), &report)?;
    write_report_csv(&config.out_dir.join("report.csv"), &report)?;
    if report.cost.is_some() {
        write_les_csv(&config.out_dir.join("les.csv"), &report)?;
    }

    for (det, m) in &report.averaged {
        println!(
            "{:>7}: avg auroc {:6.2}  avg fpr{} {:6.2}",
            det,
            100.0 * m.auroc,
            (config.tpr_target * 100.0).round() as u32,
            100.0 * m.fpr95
        );
    }
    println!(
        "best: {} with averaged auroc {:.2}{}",
        report.best_detector,
        100.0 * report.best_auroc,
        match report.les {
            Some(l) => format!("; les {l:.2}"),
            None => String::new(),
        }
    );
    Ok(())
}
