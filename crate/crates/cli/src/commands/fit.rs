use hpm_core::{fit_metric, save_model, FeatureBank};

use crate::commands::model_dir;
use crate::config::{CliError, Config};

pub fn run(config: &Config) -> Result<(), CliError> {
    let variants = config.metric_detectors();
    if variants.is_empty() {
        println!("fit: no Mahalanobis-family detectors requested, nothing to do");
        return Ok(());
    }
    let bank = FeatureBank::load(config.require_id_bank()?)?;
    for variant in variants {
        let model = fit_metric(&bank, variant, config.lambda_rel)?;
        let dir = model_dir(config, variant.name());
        save_model(&model, &dir)?;
        println!(
            "fit {}: k={} d={} lambda_rel={} -> {}",
            variant.name(),
            model.k(),
            model.d(),
            config.lambda_rel,
            dir.display()
        );
    }
    Ok(())
}
