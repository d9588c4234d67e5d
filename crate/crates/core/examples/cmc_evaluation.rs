//! Compares the four matching methods on a synthetic two-camera set whose
//! second camera is shifted far away from the first.

use kfml::eval::{run_trials, ExperimentConfig, Method};
use kfml::synth::{synthesize, SynthParams};

fn main() -> kfml::Result<()> {
    let ds = synthesize(&SynthParams::default())?;
    let cfg = ExperimentConfig::default();
    for method in Method::ALL {
        let report = run_trials(&ds, method, 10, 0, &cfg)?;
        println!("{}", report.summary());
    }
    Ok(())
}
