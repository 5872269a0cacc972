use hpm_core::synth::{generate_to_dir, OodKind, SynthSpec};

use crate::config::CliError;
use crate::SynthArgs;

pub fn run(args: &SynthArgs) -> Result<(), CliError> {
    let ood_kind = OodKind::parse(&args.ood_kind).ok_or_else(|| {
        CliError::usage(format!(
            "unknown --ood-kind {:?}; expected shifted-gaussian or uniform-sphere",
            args.ood_kind
        ))
    })?;
    let spec = SynthSpec {
        k: args.classes,
        d: args.dim,
        n_max: args.n_max,
        imbalance_ratio: args.imbalance_ratio,
        radius_coupling: args.radius_coupling,
        within_class_spread: args.spread,
        anisotropy: args.anisotropy,
        ood_kind,
        seed: args.seed,
    };
    let data = generate_to_dir(&spec, &args.out)?;
    println!(
        "wrote id ({} samples, {} classes, d={}), id_eval ({} samples), {} ({} samples) under {}",
        data.id.n(),
        data.id.k(),
        data.id.d(),
        data.id_eval.n(),
        spec.ood_kind.dir_name(),
        data.ood.n(),
        args.out.display()
    );
    Ok(())
}
