//! Kernel Fisher discriminant metric learning for re-identification, with
//! single-kernel and multiple-kernel variants and CMC evaluation.

pub mod cli;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod kernels;
pub mod kfda;
pub(crate) mod linalg;
pub mod metric;
pub mod mkl;
pub mod persist;
pub mod synth;

pub use dataset::{Dataset, FeatureRows, SplitPlan};
pub use error::{Error, Result};
pub use eval::{CmcReport, ExperimentConfig, Method};
pub use kernels::KernelSpec;
pub use kfda::{KernelConfig, KfdaModel};
pub use metric::Scorer;
pub use mkl::{MklConfig, MklVariant};
