//! RBF Gram matrices, the RMS width heuristic and the multiplier grid.

use kfml::dataset::{seeded_rng, Dataset, FeatureRows};
use kfml::kernels::{rms_width_rows, square_gram, width_grid, KernelSpec};
use rand::Rng;

fn main() -> kfml::Result<()> {
    let mut rng = seeded_rng(1);
    let rows: Vec<Vec<f64>> = (0..6).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let ds = Dataset::new(FeatureRows::from_rows(&rows)?, (0..6).map(|i| format!("p{}", i / 2)).collect(), vec![1; 6])?;

    let base = rms_width_rows(ds.features())?;
    println!("heuristic width {base:.4}");
    let widths = width_grid(base, 5, 0.1, 10.0)?;
    println!("grid {widths:.4?}");

    let k = square_gram(&KernelSpec::rbf(base)?, ds.features())?;
    println!("gram{k:.3}");
    Ok(())
}
