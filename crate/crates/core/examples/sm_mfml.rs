//! Learns both multiple-kernel configurations and compares them with the
//! single heuristic kernel on one split.

use kfml::dataset::make_split;
use kfml::eval::{cmc, fit_method, rank_all, ExperimentConfig, Method};
use kfml::metric::Scorer;
use kfml::synth::{synthesize, SynthParams};

fn main() -> kfml::Result<()> {
    let ds = synthesize(&SynthParams::default())?;
    let cfg = ExperimentConfig::default();
    let plan = make_split(&ds, 2, cfg.train_fraction)?;
    for method in [Method::Kfda, Method::NpMfml, Method::SmMfml] {
        let fit = fit_method(&ds, &plan, method, &cfg)?;
        let (results, _) = rank_all(Scorer::Kfda(&fit.model), &ds, &plan.probe_indices(&ds), &plan.gallery_indices(&ds))?;
        let kernel = fit.model.kernel().to_string();
        let short = kernel.split(" kernels=").next().unwrap_or(&kernel);
        println!("{method:<8} rank-1 {:.2}  {short}", cmc(&results, 1)?[0]);
    }
    Ok(())
}
