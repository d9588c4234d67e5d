//! Saves a trained model and checks that loading it is lossless.

use kfml::dataset::make_split;
use kfml::eval::{fit_method, ExperimentConfig, Method};
use kfml::persist::{load_model, save_model};
use kfml::synth::{synthesize, SynthParams};

fn main() -> kfml::Result<()> {
    let ds = synthesize(&SynthParams::default())?;
    let plan = make_split(&ds, 0, 0.5)?;
    let model = fit_method(&ds, &plan, Method::SmMfml, &ExperimentConfig::default())?.model;
    let path = std::env::temp_dir().join("kfml_example.kfml");
    save_model(&model, &path)?;
    let back = load_model(&path)?;
    let same = model.coefficients().iter().zip(back.coefficients().iter()).all(|(a, b)| a.to_bits() == b.to_bits());
    println!("{} -> identical coefficients: {same}", path.display());
    println!("kernel digest {}", back.kernel().digest());
    Ok(())
}
