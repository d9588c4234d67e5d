//! Kernel Fisher discriminant analysis.
//!
//! Discriminant directions are expressed as expansions `w_k = sum_l a_lk phi(x_l)`
//! over the training samples. With the between-class surrogate `P` and the
//! within-class surrogate `Q` (both `n x n`, built from kernel evaluations
//! only) the coefficients are the leading solutions of
//! `P a = lambda (Q + eps I) a`.

use std::collections::HashMap;
use std::fmt;

use nalgebra::{DMatrix, DVector};

use crate::dataset::{index_classes, Dataset, FeatureRows, SplitPlan};
use crate::error::{Error, Result};
use crate::kernels::{self, KernelBank, KernelMatrix, KernelSpec};
use crate::linalg::generalized_symmetric_eigen;
use crate::mkl::{MklConfig, MklVariant};

/// Default diagonal regulariser added to `Q`.
pub const DEFAULT_EPS: f64 = 1e-7;

/// Relative cut for the range of `Q` when no regulariser is applied.
const UNREGULARIZED_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPair {
    /// Between-class surrogate.
    pub p: DMatrix<f64>,
    /// Within-class surrogate.
    pub q: DMatrix<f64>,
    /// Column `i` is the kernel mean of class `i` against every basis sample.
    pub class_means: DMatrix<f64>,
    pub global_mean: DVector<f64>,
    pub counts: Vec<usize>,
}

impl ScatterPair {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn num_samples(&self) -> usize {
        self.p.nrows()
    }
}

/// Builds `P = sum_i n_i (m_i - m)(m_i - m)^T` and
/// `Q = sum_i K_i (I - 1 1^T / n_i) K_i^T` from a Gram matrix over the
/// training basis.
pub fn build_scatter(k: &KernelMatrix, idx: &crate::dataset::ClassIndex) -> Result<ScatterPair> {
    if !k.is_square_basis() || k.values.nrows() != k.values.ncols() {
        return Err(Error::invalid("scatter matrices need a square Gram over one basis"));
    }
    let n = k.row_basis.len();
    if idx.num_samples() != n {
        return Err(Error::invalid(format!(
            "class index covers {} samples but the Gram has {n}",
            idx.num_samples()
        )));
    }
    let position: HashMap<usize, usize> =
        k.row_basis.iter().enumerate().map(|(pos, &s)| (s, pos)).collect();
    let c = idx.num_classes();

    let mut class_means = DMatrix::zeros(n, c);
    // Q = C C^T with C holding every Gram column centred by its class mean,
    // since the centring matrix is idempotent.
    let mut centred = DMatrix::zeros(n, n);
    let mut next_col = 0;
    for (ci, members) in idx.members.iter().enumerate() {
        if members.is_empty() {
            return Err(Error::invalid(format!("class `{}` has no samples", idx.classes[ci])));
        }
        let cols = members
            .iter()
            .map(|s| {
                position
                    .get(s)
                    .copied()
                    .ok_or_else(|| Error::invalid(format!("sample {s} is not in the Gram basis")))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut mean = DVector::zeros(n);
        for &col in &cols {
            mean += k.values.column(col);
        }
        mean /= cols.len() as f64;
        for &col in &cols {
            centred.set_column(next_col, &(k.values.column(col) - &mean));
            next_col += 1;
        }
        class_means.set_column(ci, &mean);
    }

    let mut global_mean = DVector::zeros(n);
    for (ci, &ni) in idx.counts.iter().enumerate() {
        global_mean += class_means.column(ci) * ni as f64;
    }
    global_mean /= n as f64;

    let mut spread = DMatrix::zeros(n, c);
    for (ci, &ni) in idx.counts.iter().enumerate() {
        spread.set_column(ci, &((class_means.column(ci) - &global_mean) * (ni as f64).sqrt()));
    }
    let p = kernels::symmetrize(&(&spread * spread.transpose()));
    let q = kernels::symmetrize(&(&centred * centred.transpose()));
    Ok(ScatterPair {
        p,
        q,
        class_means,
        global_mean,
        counts: idx.counts.clone(),
    })
}

/// Leading generalised eigenvectors, one per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Discriminants {
    pub coefficients: DMatrix<f64>,
    pub eigvals: Vec<f64>,
}

/// Solves `P a = lambda (Q + eps I) a` for the `p` leading directions.
///
/// Columns are scaled to unit Euclidean norm with their largest-magnitude
/// entry positive. `eps = 0` solves on the numerical range of `Q`, which
/// only makes sense when `Q` is well conditioned there.
pub fn solve_kfda(sc: &ScatterPair, p: usize, eps: f64) -> Result<Discriminants> {
    let c = sc.num_classes();
    if p < 1 || p + 1 > c {
        return Err(Error::invalid(format!(
            "subspace dimension {p} out of range 1..={} for {c} classes",
            c.saturating_sub(1)
        )));
    }
    if !(eps >= 0.0 && eps.is_finite()) {
        return Err(Error::invalid(format!("regulariser must be non-negative, got {eps}")));
    }
    let n = sc.num_samples();
    let mut b = sc.q.clone();
    for i in 0..n {
        b[(i, i)] += eps;
    }
    let rank_tol = if eps > 0.0 { 0.0 } else { UNREGULARIZED_RANK_TOL };
    let ge = generalized_symmetric_eigen(&sc.p, &b, rank_tol)?;
    if p > ge.rank {
        return Err(Error::numeric(format!(
            "subspace dimension {p} exceeds the numerical rank {} of the within-class scatter",
            ge.rank
        )));
    }
    let top = ge.values[0].abs().max(f64::MIN_POSITIVE);
    let mut eigvals = Vec::with_capacity(p);
    let mut coefficients = DMatrix::zeros(n, p);
    for k in 0..p {
        let mut lambda = ge.values[k];
        if lambda < 0.0 {
            if lambda < -1e-8 * top {
                return Err(Error::numeric(format!("negative Fisher eigenvalue {lambda}")));
            }
            lambda = 0.0;
        }
        let mut col = ge.vectors.column(k).into_owned();
        let norm = col.norm();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(Error::numeric("degenerate discriminant direction"));
        }
        col /= norm;
        let lead = col.iamax();
        if col[lead] < 0.0 {
            col.neg_mut();
        }
        coefficients.set_column(k, &col);
        eigvals.push(lambda);
    }
    if coefficients.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("non-finite expansion coefficients"));
    }
    Ok(Discriminants {
        coefficients,
        eigvals,
    })
}

/// Kernel used to train a model: one base kernel or a learned combination.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelConfig {
    Single(KernelSpec),
    Mkl(MklConfig),
}

impl From<KernelSpec> for KernelConfig {
    fn from(spec: KernelSpec) -> Self {
        KernelConfig::Single(spec)
    }
}

impl From<MklConfig> for KernelConfig {
    fn from(cfg: MklConfig) -> Self {
        KernelConfig::Mkl(cfg)
    }
}

impl KernelConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            KernelConfig::Single(spec) => spec.validate(),
            KernelConfig::Mkl(cfg) => cfg.validate(),
        }
    }

    /// Combined Gram over a square training basis.
    pub fn train_gram(&self, ds: &Dataset, basis: &[usize]) -> Result<KernelMatrix> {
        match self {
            KernelConfig::Single(spec) => kernels::gram(spec, ds, basis, basis),
            KernelConfig::Mkl(cfg) => match &cfg.variant {
                MklVariant::Np { weights, .. } => {
                    let (specs, w): (Vec<KernelSpec>, Vec<f64>) = cfg
                        .bank_specs
                        .iter()
                        .zip(weights)
                        .filter(|(_, &b)| b > 0.0)
                        .map(|(s, &b)| (*s, b))
                        .unzip();
                    let bank = KernelBank::build(&specs, ds, basis)?;
                    let sum: f64 = w.iter().sum();
                    let w: Vec<f64> = w.iter().map(|b| b / sum).collect();
                    kernels::combine_convex(&bank, &w)
                }
                MklVariant::Sm { pair, tau } => {
                    let k1 = kernels::gram(&cfg.bank_specs[pair.0], ds, basis, basis)?;
                    let k2 = kernels::gram(&cfg.bank_specs[pair.1], ds, basis, basis)?;
                    kernels::combine_sm(&k1, &k2, *tau)
                }
            },
        }
    }

    /// Text digest of the configuration, stable across runs.
    pub fn digest(&self) -> String {
        use sha2::{Digest, Sha256};
        hex::encode(Sha256::digest(self.to_string().as_bytes()))
    }
}

impl fmt::Display for KernelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KernelConfig::Single(spec) => write!(f, "single {spec}"),
            KernelConfig::Mkl(cfg) => write!(f, "{cfg}"),
        }
    }
}

/// Trained KFDA metric.
#[derive(Debug, Clone)]
pub struct KfdaModel {
    coefficients: DMatrix<f64>,
    eigvals: Vec<f64>,
    train_features: FeatureRows,
    kernel: KernelConfig,
    eps: f64,
    /// Squared-matrix kernels only: `tau (K1 - K2) A` over the training basis.
    sm_term: Option<DMatrix<f64>>,
}

impl PartialEq for KfdaModel {
    fn eq(&self, other: &Self) -> bool {
        self.coefficients == other.coefficients
            && self.eigvals == other.eigvals
            && self.train_features == other.train_features
            && self.kernel == other.kernel
            && self.eps.to_bits() == other.eps.to_bits()
    }
}

impl KfdaModel {
    pub fn from_parts(
        coefficients: DMatrix<f64>,
        eigvals: Vec<f64>,
        train_features: FeatureRows,
        kernel: KernelConfig,
        eps: f64,
    ) -> Result<Self> {
        kernel.validate()?;
        let n = train_features.len();
        if coefficients.nrows() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                found: coefficients.nrows(),
            });
        }
        if eigvals.len() != coefficients.ncols() {
            return Err(Error::DimensionMismatch {
                expected: coefficients.ncols(),
                found: eigvals.len(),
            });
        }
        if coefficients.iter().chain(&eigvals).any(|v| !v.is_finite()) {
            return Err(Error::numeric("model contains non-finite values"));
        }
        let sm_term = match &kernel {
            KernelConfig::Mkl(MklConfig {
                variant: MklVariant::Sm { pair, tau },
                bank_specs,
            }) if *tau != 0.0 => {
                let k1 = kernels::square_gram(&bank_specs[pair.0], &train_features)?;
                let k2 = kernels::square_gram(&bank_specs[pair.1], &train_features)?;
                Some((k1 - k2) * &coefficients * *tau)
            }
            _ => None,
        };
        Ok(Self {
            coefficients,
            eigvals,
            train_features,
            kernel,
            eps,
            sm_term,
        })
    }

    /// Expansion coefficients `A`, `n x p`.
    pub fn coefficients(&self) -> &DMatrix<f64> {
        &self.coefficients
    }

    pub fn eigvals(&self) -> &[f64] {
        &self.eigvals
    }

    pub fn train_features(&self) -> &FeatureRows {
        &self.train_features
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn n(&self) -> usize {
        self.train_features.len()
    }

    pub fn p(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn dim(&self) -> usize {
        self.train_features.dim()
    }

    /// Keeps the `p` leading discriminants.
    pub fn truncate(&self, p: usize) -> Result<KfdaModel> {
        if p < 1 || p > self.p() {
            return Err(Error::invalid(format!(
                "cannot truncate a {}-dimensional model to {p}",
                self.p()
            )));
        }
        KfdaModel::from_parts(
            self.coefficients.columns(0, p).into_owned(),
            self.eigvals[..p].to_vec(),
            self.train_features.clone(),
            self.kernel.clone(),
            self.eps,
        )
    }

    /// Projects every query row; returns an `m x p` matrix of coordinates.
    pub fn embed_rows(&self, queries: &FeatureRows) -> Result<DMatrix<f64>> {
        if queries.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: queries.dim(),
            });
        }
        let basis = &self.train_features;
        let coords_t = match &self.kernel {
            KernelConfig::Single(spec) => {
                self.coefficients.transpose() * kernels::cross_gram(spec, basis, queries)?
            }
            KernelConfig::Mkl(cfg) => match &cfg.variant {
                MklVariant::Np { weights, .. } => {
                    let mut k = DMatrix::zeros(basis.len(), queries.len());
                    for (spec, &b) in cfg.bank_specs.iter().zip(weights) {
                        if b > 0.0 {
                            k += kernels::cross_gram(spec, basis, queries)? * b;
                        }
                    }
                    self.coefficients.transpose() * k
                }
                MklVariant::Sm { pair, .. } => {
                    let k1 = kernels::cross_gram(&cfg.bank_specs[pair.0], basis, queries)?;
                    let k2 = kernels::cross_gram(&cfg.bank_specs[pair.1], basis, queries)?;
                    let mut out = self.coefficients.transpose() * ((&k1 + &k2) * 0.5);
                    if let Some(term) = &self.sm_term {
                        out += term.transpose() * (k1 - k2);
                    }
                    out
                }
            },
        };
        Ok(coords_t.transpose())
    }
}

/// Fits a model on the listed dataset samples, grouped by identity.
///
/// `p = None` keeps `c - 1` discriminants.
pub fn fit(
    ds: &Dataset,
    train: &[usize],
    kernel: &KernelConfig,
    eps: f64,
    p: Option<usize>,
) -> Result<KfdaModel> {
    let idx = index_classes(ds, train)?;
    let c = idx.num_classes();
    if c < 2 {
        return Err(Error::invalid(format!("training needs at least 2 classes, found {c}")));
    }
    let mut basis = train.to_vec();
    basis.sort_unstable();
    let k = kernel.train_gram(ds, &basis)?;
    let sc = build_scatter(&k, &idx)?;
    let disc = solve_kfda(&sc, p.unwrap_or(c - 1), eps)?;
    KfdaModel::from_parts(
        disc.coefficients,
        disc.eigvals,
        ds.features().select(&basis),
        kernel.clone(),
        eps,
    )
}

/// Fits on every sample of the plan's training identities.
pub fn train(
    ds: &Dataset,
    plan: &SplitPlan,
    kernel: &KernelConfig,
    eps: f64,
    p: Option<usize>,
) -> Result<KfdaModel> {
    fit(ds, &plan.train_indices(ds), kernel, eps, p)
}
