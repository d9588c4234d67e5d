//! Truncated proportional kernel weights from per-kernel accuracies.

use kfml::mkl::{np_weights_exact, proportional_weights};
use num_rational::Ratio;

fn main() -> kfml::Result<()> {
    let pis = [0.9, 0.8, 0.5, 0.7];
    for n in 1..pis.len() {
        println!("N={n} {:?}", np_weights_exact(&pis, n)?);
    }
    println!("untruncated {:?}", proportional_weights(&pis, None)?);

    let exact = np_weights_exact(&[Ratio::new(9, 10), Ratio::new(8, 10), Ratio::new(5, 10)], 2)?;
    let shown: Vec<String> = exact.iter().map(|r| r.to_string()).collect();
    println!("exact {}", shown.join(", "));
    Ok(())
}
