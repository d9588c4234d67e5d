//! With a linear kernel the learned distance is the classical Fisher
//! discriminant distance in input space.

use kfml::dataset::{seeded_rng, Dataset, FeatureRows};
use kfml::kernels::KernelSpec;
use kfml::kfda::{fit, KernelConfig};
use kfml::metric::score;
use rand::Rng;

fn main() -> kfml::Result<()> {
    let mut rng = seeded_rng(9);
    let mut rows = Vec::new();
    let mut ids = Vec::new();
    for c in 0..6 {
        let centre: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        for _ in 0..5 {
            rows.push(centre.iter().map(|m| m + rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
            ids.push(format!("c{c}"));
        }
    }
    let n = rows.len();
    let ds = Dataset::new(FeatureRows::from_rows(&rows)?, ids, vec![1; n])?;
    let model = fit(&ds, &(0..n).collect::<Vec<_>>(), &KernelConfig::Single(KernelSpec::Linear), 0.0, Some(3))?;
    println!("eigenvalues {:.4?}", model.eigvals());
    println!("d(x0, x1) = {:.6}", score(&model, ds.sample(0), ds.sample(1))?);
    println!("d(x0, x5) = {:.6}", score(&model, ds.sample(0), ds.sample(5))?);
    Ok(())
}
