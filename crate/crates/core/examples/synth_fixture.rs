//! Writes a synthetic two-camera feature file and reads it back.

use kfml::dataset::{load_features, write_features, FeatureFormat};
use kfml::synth::{synthesize, SynthParams};

fn main() -> kfml::Result<()> {
    let params = SynthParams {
        identities: 12,
        d: 6,
        ..Default::default()
    };
    let ds = synthesize(&params)?;
    let path = std::env::temp_dir().join("kfml_synth_example.csv");
    write_features(&ds, &path)?;
    let back = load_features(&path, FeatureFormat::Csv)?;
    assert_eq!(back, ds);
    println!("{} rows, d = {}, cameras {:?} -> {}", back.len(), back.dim(), back.camera_labels(), path.display());
    Ok(())
}
