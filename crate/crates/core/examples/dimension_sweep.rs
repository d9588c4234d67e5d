//! Rank-1 accuracy as the number of retained discriminants grows.

use kfml::eval::{dimension_sweep, sweep_to_csv, ExperimentConfig, Method};
use kfml::synth::{synthesize, SynthParams};

fn main() -> kfml::Result<()> {
    let ds = synthesize(&SynthParams::default())?;
    let p_values: Vec<usize> = (1..20).collect();
    let rows = dimension_sweep(&ds, Method::Kfda, &p_values, 10, 0, &ExperimentConfig::default())?;
    print!("{}", sweep_to_csv(&rows));
    Ok(())
}
