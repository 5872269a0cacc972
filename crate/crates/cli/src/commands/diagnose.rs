use std::collections::BTreeMap;

use hpm_core::geometry::{class_covariance, class_means, pooled_covariance, ridge, spectrum};
use hpm_core::report::{
    median, write_null_scatter_csv, write_radius_csv, write_spectrum_csv, write_summary_json,
    DiagnosticsSummary, NullScatterSummary, RadiusSummary, SpectrumRow, SpectrumSummary,
};
use hpm_core::{
    null_scatter, projectors, radius_profile, split_head_tail, ClassifierHead, FeatureBank,
    Variant,
};

use crate::commands::ensure_dir;
use crate::config::{CliError, Config};
use crate::plots;

pub fn run(config: &Config) -> Result<(), CliError> {
    let bank = FeatureBank::load(config.require_id_bank()?)?;
    let counts = bank.class_counts();
    let split = split_head_tail(&counts, config.head_fraction)?;
    let diag_dir = config.out_dir.join("diagnostics");
    ensure_dir(&diag_dir)?;

    // radius profile is always available
    let radius = radius_profile(&bank, &split);
    write_radius_csv(&diag_dir.join("radius.csv"), &radius, &counts)?;

    // null-space diagnostics need a classifier head
    let head = config
        .head_dir()
        .filter(|dir| ClassifierHead::exists(dir))
        .map(|dir| ClassifierHead::load(&dir, bank.k(), bank.d()))
        .transpose()?;
    let scatter = match &head {
        Some(h) => {
            let proj = projectors(h);
            let report = null_scatter(&bank, &proj, &split)?;
            write_null_scatter_csv(&diag_dir.join("null_scatter.csv"), &report, &counts)?;
            Some(report)
        }
        None => {
            eprintln!(
                "diagnose: no classifier head found; skipping null-space diagnostics \
                 (pass --head or store head_w.bin/head_b.bin next to the bank)"
            );
            None
        }
    };

    // per-variant spectra of the ridge-regularized covariances used for
    // scoring: one row for pooled variants, one row per class otherwise
    let mut rows: Vec<SpectrumRow> = Vec::new();
    let mut spectrum_summaries: BTreeMap<String, SpectrumSummary> = BTreeMap::new();
    for variant in Variant::ALL {
        let normalized = variant == Variant::HC_MD || variant == Variant::HPM;
        let pooled = variant == Variant::RP_MD || variant == Variant::HPM;
        let mut ers = Vec::new();
        let mut lcs = Vec::new();
        if pooled {
            let stats = class_means(&bank, normalized)?;
            let cov = ridge(&pooled_covariance(&bank, &stats)?, config.lambda_rel)?;
            let diag = spectrum(&cov);
            ers.push(diag.effective_rank);
            lcs.push(diag.log_condition);
            rows.push(SpectrumRow {
                variant: variant.name().to_string(),
                scope: "pooled".to_string(),
                diagnostics: diag,
            });
        } else {
            for (c, &count) in counts.iter().enumerate() {
                if count < 2 {
                    continue;
                }
                let cov = ridge(&class_covariance(&bank, c, normalized)?, config.lambda_rel)?;
                let diag = spectrum(&cov);
                ers.push(diag.effective_rank);
                lcs.push(diag.log_condition);
                rows.push(SpectrumRow {
                    variant: variant.name().to_string(),
                    scope: c.to_string(),
                    diagnostics: diag,
                });
            }
        }
        spectrum_summaries.insert(
            variant.name().to_string(),
            SpectrumSummary {
                effective_rank_max: ers.iter().cloned().fold(f64::NAN, f64::max),
                effective_rank_median: median(&ers),
                log_condition_median: median(&lcs),
            },
        );
    }
    write_spectrum_csv(&diag_dir.join("spectrum.csv"), &rows)?;

    let summary = DiagnosticsSummary {
        model: config.model.clone(),
        orientation: hpm_core::ORIENTATION.to_string(),
        notes: config.notes(),
        split: Some(split.clone()),
        null_scatter: scatter.as_ref().map(|s| NullScatterSummary {
            head_avg: s.head_avg,
            tail_avg: s.tail_avg,
            skipped_classes: s.skipped.clone(),
        }),
        radius: Some(RadiusSummary {
            head_mean: radius.head_mean,
            tail_mean: radius.tail_mean,
            tail_head_ratio: radius.tail_head_ratio,
        }),
        spectrum: spectrum_summaries,
    };
    write_summary_json(&diag_dir.join("summary.json"), &summary)?;

    if config.plots {
        plots::emit(&diag_dir, &radius, scatter.as_ref(), &rows)?;
    }
    println!("diagnostics written to {}", diag_dir.display());
    Ok(())
}
