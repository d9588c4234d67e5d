//! Fits a single-kernel model and scores pairs in the learned subspace.

use kfml::dataset::make_split;
use kfml::eval::heuristic_kernel;
use kfml::kfda::{train, KernelConfig, DEFAULT_EPS};
use kfml::metric::{embed, euclidean_score, score};
use kfml::synth::{synthesize, SynthParams};

fn main() -> kfml::Result<()> {
    let ds = synthesize(&SynthParams::default())?;
    let plan = make_split(&ds, 0, 0.5)?;
    let kernel = KernelConfig::Single(heuristic_kernel(&ds, &plan)?);
    let model = train(&ds, &plan, &kernel, DEFAULT_EPS, None)?;
    println!("{} training samples, {} discriminants", model.n(), model.p());
    println!("leading eigenvalues {:.3?}", &model.eigvals()[..3]);

    let probes = plan.probe_indices(&ds);
    let gallery = plan.gallery_indices(&ds);
    let (y, same, other) = (probes[0], gallery[0], gallery[1]);
    println!("probe {} vs gallery {} and {}", ds.identity(y), ds.identity(same), ds.identity(other));
    println!("  learned   {:10.4} {:10.4}", score(&model, ds.sample(y), ds.sample(same))?, score(&model, ds.sample(y), ds.sample(other))?);
    println!("  euclidean {:10.4} {:10.4}", euclidean_score(ds.sample(y), ds.sample(same))?, euclidean_score(ds.sample(y), ds.sample(other))?);
    println!("projection {:.3?}", embed(&model, ds.sample(y))?.coords.as_slice());
    Ok(())
}
