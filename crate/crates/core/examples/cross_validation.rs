//! Per-kernel cross-validated rank-1 accuracies over training identities.

use kfml::dataset::make_split;
use kfml::eval::{kernel_bank_specs, ExperimentConfig};
use kfml::mkl::cv_kernel_accuracies;
use kfml::synth::{synthesize, SynthParams};

fn main() -> kfml::Result<()> {
    let ds = synthesize(&SynthParams::default())?;
    let cfg = ExperimentConfig { q: 8, ..Default::default() };
    let plan = make_split(&ds, 0, cfg.train_fraction)?;
    let bank = kernel_bank_specs(&ds, &plan, &cfg)?;
    let acc = cv_kernel_accuracies(&ds, &plan.train_ids, &bank, &cfg.cv_options(0, plan.cameras()))?;
    for (spec, pi) in bank.iter().zip(&acc.pis) {
        println!("{spec:<28} {pi:.3}");
    }
    Ok(())
}
