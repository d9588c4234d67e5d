//! Multiple-kernel configuration learned from cross-validated per-kernel
//! accuracies.
//!
//! Two strategies are supported:
//!
//! * `np`: a convex combination of the `N` best kernels, each weighted by how
//!   far its accuracy exceeds that of the `(N+1)`-th best kernel.
//! * `sm`: the two best kernels combined as `(K1 + K2)/2 + tau (K1 - K2)^2`.
//!
//! Cross-validation folds partition identities, so held-out folds only
//! contain identities unseen during the fold's training.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};

use num_traits::Num;
use rayon::prelude::*;

use crate::dataset::{seeded_rng, shuffle, CameraPair, Dataset};
use crate::error::{Error, Result};
use crate::eval::{cmc, rank_all};
use crate::kernels::{check_convex_weights, KernelSpec};
use crate::kfda::{fit, KernelConfig};
use crate::metric::Scorer;

/// Mean held-out rank-1 accuracy of each base kernel.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelAccuracies {
    pub pis: Vec<f64>,
    pub folds: usize,
    pub fold_seed: u64,
    /// `per_fold[kernel][fold]`; `None` for skipped folds.
    pub per_fold: Vec<Vec<Option<f64>>>,
}

impl KernelAccuracies {
    /// Rows `kernel,fold,rank1` followed by one `kernel,mean,pi` row per kernel.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("kernel,fold,rank1\n");
        for (k, folds) in self.per_fold.iter().enumerate() {
            for (f, acc) in folds.iter().enumerate() {
                if let Some(a) = acc {
                    let _ = writeln!(out, "{},{},{}", k + 1, f + 1, a);
                }
            }
        }
        for (k, pi) in self.pis.iter().enumerate() {
            let _ = writeln!(out, "{},mean,{}", k + 1, pi);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MklKind {
    Np,
    Sm,
}

#[derive(Debug, Clone, PartialEq)]
pub enum MklVariant {
    Np { weights: Vec<f64>, n: usize },
    Sm { pair: (usize, usize), tau: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct MklConfig {
    pub variant: MklVariant,
    pub bank_specs: Vec<KernelSpec>,
}

impl MklConfig {
    pub fn kind(&self) -> MklKind {
        match self.variant {
            MklVariant::Np { .. } => MklKind::Np,
            MklVariant::Sm { .. } => MklKind::Sm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.bank_specs.len();
        if q == 0 {
            return Err(Error::invalid("multiple-kernel config without kernels"));
        }
        for s in &self.bank_specs {
            s.validate()?;
        }
        match &self.variant {
            MklVariant::Np { weights, n } => {
                check_convex_weights(weights, q)?;
                let support = weights.iter().filter(|&&b| b > 0.0).count();
                if support != (*n).min(q) {
                    return Err(Error::invalid(format!(
                        "np weights have {support} non-zero entries, expected {}",
                        (*n).min(q)
                    )));
                }
            }
            MklVariant::Sm { pair, tau } => {
                if pair.0 == pair.1 || pair.0 >= q || pair.1 >= q {
                    return Err(Error::invalid(format!("invalid kernel pair {pair:?} for {q} kernels")));
                }
                if !(*tau >= 0.0 && tau.is_finite()) {
                    return Err(Error::invalid(format!("tau must be non-negative, got {tau}")));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for MklConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.variant {
            MklVariant::Np { weights, n } => {
                write!(f, "np n={n} weights=")?;
                for (i, w) in weights.iter().enumerate() {
                    write!(f, "{}{w}", if i == 0 { "" } else { "," })?;
                }
            }
            MklVariant::Sm { pair, tau } => write!(f, "sm pair={},{} tau={tau}", pair.0, pair.1)?,
        }
        write!(f, " kernels=")?;
        for (i, s) in self.bank_specs.iter().enumerate() {
            write!(f, "{}{s}", if i == 0 { "" } else { ";" })?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CvOptions {
    pub folds: usize,
    pub seed: u64,
    pub eps: f64,
    pub cameras: CameraPair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MklGrids {
    pub n_grid: Vec<usize>,
    pub tau_grid: Vec<f64>,
}

/// Seeded partition of identities into `folds` groups of near-equal size.
pub fn identity_folds(train_ids: &BTreeSet<String>, folds: usize, seed: u64) -> Result<Vec<Vec<String>>> {
    if folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {folds}")));
    }
    if train_ids.len() < folds {
        return Err(Error::invalid(format!(
            "{} training identities cannot fill {folds} folds",
            train_ids.len()
        )));
    }
    let mut ids: Vec<String> = train_ids.iter().cloned().collect();
    shuffle(&mut ids, &mut seeded_rng(seed));
    let mut out = vec![Vec::new(); folds];
    for (i, id) in ids.into_iter().enumerate() {
        out[i % folds].push(id);
    }
    Ok(out)
}

/// Held-out rank-1 accuracy of `kernel` on one fold, or `None` when the fold
/// has fewer than two identities.
fn fold_rank1(
    ds: &Dataset,
    train_ids: &BTreeSet<String>,
    held_out: &[String],
    kernel: &KernelConfig,
    opts: &CvOptions,
) -> Result<Option<f64>> {
    if held_out.len() < 2 {
        return Ok(None);
    }
    let held: BTreeSet<&str> = held_out.iter().map(String::as_str).collect();
    let train: Vec<usize> = ds
        .indices_of(train_ids)
        .filter(|&i| !held.contains(ds.identity(i)))
        .collect();
    let probes: Vec<usize> = (0..ds.len())
        .filter(|&i| held.contains(ds.identity(i)) && ds.camera(i) == opts.cameras.probe)
        .collect();
    let gallery: Vec<usize> = (0..ds.len())
        .filter(|&i| held.contains(ds.identity(i)) && ds.camera(i) == opts.cameras.gallery)
        .collect();
    if probes.is_empty() || gallery.is_empty() {
        return Ok(None);
    }
    let model = fit(ds, &train, kernel, opts.eps, None)?;
    let (results, _) = rank_all(Scorer::Kfda(&model), ds, &probes, &gallery)?;
    if results.is_empty() {
        return Ok(None);
    }
    Ok(Some(cmc(&results, 1)?[0]))
}

/// `table[candidate][fold]`, `None` where the fold was skipped.
type FoldTable = Vec<Vec<Option<f64>>>;

/// Mean of the non-skipped fold accuracies for each candidate kernel.
fn cv_table(
    ds: &Dataset,
    train_ids: &BTreeSet<String>,
    kernels: &[KernelConfig],
    opts: &CvOptions,
) -> Result<(Vec<f64>, FoldTable)> {
    let folds = identity_folds(train_ids, opts.folds, opts.seed)?;
    if let Some(small) = folds.iter().position(|f| f.len() < 2) {
        log::warn!("cross-validation fold {} holds a single identity and is skipped", small + 1);
    }
    let cells: Vec<(usize, usize)> = (0..kernels.len())
        .flat_map(|k| (0..folds.len()).map(move |f| (k, f)))
        .collect();
    let accs = cells
        .par_iter()
        .map(|&(k, f)| {
            fold_rank1(ds, train_ids, &folds[f], &kernels[k], opts)
                .map_err(|e| e.context(format!("kernel {} fold {}", k + 1, f + 1)))
        })
        .collect::<Result<Vec<_>>>()?;
    let per_fold: Vec<Vec<Option<f64>>> = accs.chunks(folds.len()).map(<[_]>::to_vec).collect();
    let means = per_fold
        .iter()
        .map(|row| {
            let used: Vec<f64> = row.iter().flatten().copied().collect();
            if used.is_empty() {
                Err(Error::invalid("every cross-validation fold was skipped"))
            } else {
                Ok(used.iter().sum::<f64>() / used.len() as f64)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((means, per_fold))
}

/// Per-kernel cross-validated rank-1 accuracies over the training identities.
pub fn cv_kernel_accuracies(
    ds: &Dataset,
    train_ids: &BTreeSet<String>,
    bank: &[KernelSpec],
    opts: &CvOptions,
) -> Result<KernelAccuracies> {
    if bank.is_empty() {
        return Err(Error::invalid("no kernels to cross-validate"));
    }
    let kernels: Vec<KernelConfig> = bank.iter().map(|s| KernelConfig::Single(*s)).collect();
    let (pis, per_fold) = cv_table(ds, train_ids, &kernels, opts)?;
    Ok(KernelAccuracies {
        pis,
        folds: opts.folds,
        fold_seed: opts.seed,
        per_fold,
    })
}

/// Indices sorted by descending accuracy; equal accuracies keep index order.
fn ranking<T: PartialOrd>(pis: &[T]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pis.len()).collect();
    order.sort_by(|&a, &b| pis[b].partial_cmp(&pis[a]).unwrap_or(std::cmp::Ordering::Equal));
    order
}

/// Truncated proportional weights over the `n` best kernels:
/// `beta_t = (pi_t - delta) / sum_{r in S} (pi_r - delta)` for `t` in the top
/// set `S`, zero elsewhere, with `delta` the `(n+1)`-th best accuracy.
///
/// When the `n`-th and `(n+1)`-th accuracies tie the rule degenerates and the
/// weights fall back to uniform over `S`.
pub fn np_weights_exact<T>(pis: &[T], n: usize) -> Result<Vec<T>>
where
    T: Num + PartialOrd + Copy,
{
    let q = pis.len();
    if n < 1 || n >= q {
        return Err(Error::invalid(format!("N = {n} must satisfy 1 <= N < q = {q}")));
    }
    let order = ranking(pis);
    let top = &order[..n];
    let delta = pis[order[n]];
    let mut weights = vec![T::zero(); q];
    if !(pis[order[n - 1]] > delta) {
        log::warn!("accuracies tie at the N-th best kernel; using uniform weights over the top {n}");
        let count = (0..n).fold(T::zero(), |acc, _| acc + T::one());
        for &t in top {
            weights[t] = T::one() / count;
        }
        return Ok(weights);
    }
    let denom = top.iter().fold(T::zero(), |acc, &t| acc + (pis[t] - delta));
    for &t in top {
        weights[t] = (pis[t] - delta) / denom;
    }
    Ok(weights)
}

pub fn np_weights(acc: &KernelAccuracies, n: usize) -> Result<Vec<f64>> {
    np_weights_exact(&acc.pis, n)
}

/// Untruncated proportional weights `(pi_t - delta) / sum_r (pi_r - delta)`
/// over every kernel, with `delta = min(pi)` unless given. Kept as a
/// reference for comparing against [`np_weights`].
pub fn proportional_weights(pis: &[f64], delta: Option<f64>) -> Result<Vec<f64>> {
    if pis.is_empty() {
        return Err(Error::invalid("no accuracies"));
    }
    let min = pis.iter().copied().fold(f64::INFINITY, f64::min);
    let delta = delta.unwrap_or(min);
    if delta > min {
        return Err(Error::invalid("delta must not exceed the smallest accuracy"));
    }
    let denom: f64 = pis.iter().map(|p| p - delta).sum();
    if denom <= 0.0 {
        return Ok(vec![1.0 / pis.len() as f64; pis.len()]);
    }
    Ok(pis.iter().map(|p| (p - delta) / denom).collect())
}

/// The two most accurate kernels, best first.
pub fn select_sm_pair(acc: &KernelAccuracies) -> Result<(usize, usize)> {
    if acc.pis.len() < 2 {
        return Err(Error::invalid("squared-matrix combination needs at least two kernels"));
    }
    let order = ranking(&acc.pis);
    Ok((order[0], order[1]))
}

fn argmax_first(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

fn check_bank(bank: &[KernelSpec], pair: (usize, usize)) -> Result<()> {
    if pair.0 == pair.1 || pair.0 >= bank.len() || pair.1 >= bank.len() {
        return Err(Error::invalid(format!("invalid kernel pair {pair:?}")));
    }
    Ok(())
}

/// Cross-validated choice of `tau` for the squared-matrix pair; ties go to
/// the smallest `tau`.
pub fn select_tau(
    ds: &Dataset,
    train_ids: &BTreeSet<String>,
    bank: &[KernelSpec],
    pair: (usize, usize),
    tau_grid: &[f64],
    opts: &CvOptions,
) -> Result<f64> {
    check_bank(bank, pair)?;
    if tau_grid.is_empty() || tau_grid.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
        return Err(Error::invalid("tau grid must be non-empty and non-negative"));
    }
    let mut grid = tau_grid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let kernels: Vec<KernelConfig> = grid
        .iter()
        .map(|&tau| {
            KernelConfig::Mkl(MklConfig {
                variant: MklVariant::Sm { pair, tau },
                bank_specs: bank.to_vec(),
            })
        })
        .collect();
    let (means, _) = cv_table(ds, train_ids, &kernels, opts)?;
    Ok(grid[argmax_first(&means)])
}

/// Cross-validated choice of `N` for the truncated proportional weights;
/// ties go to the smallest `N`.
pub fn select_n(
    ds: &Dataset,
    train_ids: &BTreeSet<String>,
    bank: &[KernelSpec],
    acc: &KernelAccuracies,
    n_grid: &[usize],
    opts: &CvOptions,
) -> Result<usize> {
    let q = acc.pis.len();
    if bank.len() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            found: bank.len(),
        });
    }
    if n_grid.is_empty() {
        return Err(Error::invalid("N grid is empty"));
    }
    if let Some(bad) = n_grid.iter().find(|&&n| n < 1 || n >= q) {
        return Err(Error::invalid(format!("N = {bad} outside 1..{q}")));
    }
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.len() == 1 {
        return Ok(grid[0]);
    }
    let kernels = grid
        .iter()
        .map(|&n| {
            Ok(KernelConfig::Mkl(MklConfig {
                variant: MklVariant::Np {
                    weights: np_weights(acc, n)?,
                    n,
                },
                bank_specs: bank.to_vec(),
            }))
        })
        .collect::<Result<Vec<_>>>()?;
    let (means, _) = cv_table(ds, train_ids, &kernels, opts)?;
    Ok(grid[argmax_first(&means)])
}

/// Learns the full multiple-kernel configuration of the requested kind.
pub fn build_config(
    kind: MklKind,
    acc: &KernelAccuracies,
    ds: &Dataset,
    train_ids: &BTreeSet<String>,
    bank: &[KernelSpec],
    grids: &MklGrids,
    opts: &CvOptions,
) -> Result<MklConfig> {
    let q = bank.len();
    if acc.pis.len() != q {
        return Err(Error::DimensionMismatch {
            expected: q,
            found: acc.pis.len(),
        });
    }
    let variant = match kind {
        MklKind::Np if q == 1 => MklVariant::Np {
            weights: vec![1.0],
            n: 1,
        },
        MklKind::Np => {
            let n = select_n(ds, train_ids, bank, acc, &grids.n_grid, opts)?;
            MklVariant::Np {
                weights: np_weights(acc, n)?,
                n,
            }
        }
        MklKind::Sm => {
            let pair = select_sm_pair(acc)?;
            let tau = select_tau(ds, train_ids, bank, pair, &grids.tau_grid, opts)?;
            MklVariant::Sm { pair, tau }
        }
    };
    let cfg = MklConfig {
        variant,
        bank_specs: bank.to_vec(),
    };
    cfg.validate()?;
    Ok(cfg)
}
