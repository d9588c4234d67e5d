//! Probe/gallery ranking, CMC curves and repeated-trial experiments.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;

use crate::dataset::{make_split_with, CameraPair, Dataset, SplitPlan};
use crate::error::{Error, Result};
use crate::kernels::{rms_width, width_grid, KernelSpec};
use crate::kfda::{fit, KernelConfig, KfdaModel, DEFAULT_EPS};
use crate::metric::Scorer;
use crate::mkl::{build_config, cv_kernel_accuracies, CvOptions, KernelAccuracies, MklGrids, MklKind};

/// Ranking of the whole gallery for one probe.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RankedResult {
    /// Dataset index of the probe sample.
    pub probe_index: usize,
    /// Gallery positions sorted by ascending score, ties by position.
    pub ordered_gallery: Vec<usize>,
    /// 1-based rank of the first gallery entry sharing the probe identity.
    pub true_rank: usize,
}

/// Ranks one row of scores. Returns `None` when no gallery entry carries the
/// probe identity.
pub fn rank_scores<S: AsRef<str>>(
    probe_index: usize,
    probe_id: &str,
    scores: &[f64],
    gallery_ids: &[S],
) -> Option<RankedResult> {
    debug_assert_eq!(scores.len(), gallery_ids.len());
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let pos = order.iter().position(|&g| gallery_ids[g].as_ref() == probe_id)?;
    Some(RankedResult {
        probe_index,
        ordered_gallery: order,
        true_rank: pos + 1,
    })
}

/// Scores one probe against a gallery and ranks it.
pub fn rank_probe(
    scorer: Scorer<'_>,
    ds: &Dataset,
    probe: usize,
    gallery: &[usize],
) -> Result<Option<RankedResult>> {
    if gallery.is_empty() {
        return Err(Error::invalid("empty gallery"));
    }
    let (results, _) = rank_all(scorer, ds, &[probe], gallery)?;
    Ok(results.into_iter().next())
}

/// Ranks every probe against the gallery. Probes whose identity is absent
/// from the gallery are skipped and counted in the second return value.
pub fn rank_all(
    scorer: Scorer<'_>,
    ds: &Dataset,
    probes: &[usize],
    gallery: &[usize],
) -> Result<(Vec<RankedResult>, usize)> {
    if gallery.is_empty() {
        return Err(Error::invalid("empty gallery"));
    }
    let scores = scorer.score_block(&ds.features().select(probes), &ds.features().select(gallery))?;
    let gallery_ids: Vec<&str> = gallery.iter().map(|&g| ds.identity(g)).collect();
    let mut results = Vec::with_capacity(probes.len());
    let mut missing = 0;
    for (row, &p) in probes.iter().enumerate() {
        let s: Vec<f64> = scores.row(row).iter().copied().collect();
        match rank_scores(p, ds.identity(p), &s, &gallery_ids) {
            Some(r) => results.push(r),
            None => missing += 1,
        }
    }
    if missing > 0 {
        log::warn!("{missing} probe(s) have no true match in the gallery and were excluded");
    }
    Ok((results, missing))
}

/// `acc[k-1]` is the fraction of results with `true_rank <= k`, for k in 1..=R.
pub fn cmc(results: &[RankedResult], max_rank: usize) -> Result<Vec<f64>> {
    if results.is_empty() {
        return Err(Error::invalid("cmc of an empty result list"));
    }
    if max_rank == 0 {
        return Err(Error::invalid("cmc needs at least one rank"));
    }
    let mut hits = vec![0usize; max_rank];
    for r in results {
        if r.true_rank <= max_rank {
            hits[r.true_rank - 1] += 1;
        }
    }
    let total = results.len() as f64;
    let mut acc = Vec::with_capacity(max_rank);
    let mut running = 0;
    for h in hits {
        running += h;
        acc.push(running as f64 / total);
    }
    Ok(acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Euclidean,
    Kfda,
    NpMfml,
    SmMfml,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Euclidean, Method::Kfda, Method::NpMfml, Method::SmMfml];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Euclidean => "euclidean",
            Method::Kfda => "kfda",
            Method::NpMfml => "np-mfml",
            Method::SmMfml => "sm-mfml",
        })
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.to_string() == s)
            .ok_or_else(|| Error::invalid(format!("unknown method `{s}`")))
    }
}

/// Knobs shared by training, cross-validation and evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub train_fraction: f64,
    pub eps: f64,
    /// `None` keeps `c - 1` discriminants.
    pub p: Option<usize>,
    pub q: usize,
    pub width_lo: f64,
    pub width_hi: f64,
    pub folds: usize,
    /// `None` uses `1..=min(5, q - 1)`.
    pub n_grid: Option<Vec<usize>>,
    pub tau_grid: Vec<f64>,
    /// `None` uses the two smallest camera labels.
    pub cameras: Option<CameraPair>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.5,
            eps: DEFAULT_EPS,
            p: None,
            q: 20,
            width_lo: 0.1,
            width_hi: 10.0,
            folds: 10,
            n_grid: None,
            tau_grid: vec![0.0, 1e-3, 1e-2, 1e-1, 1.0],
            cameras: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::invalid("train_fraction must lie in (0, 1)"));
        }
        if !(self.eps > 0.0 && self.eps.is_finite()) {
            return Err(Error::invalid("eps must be positive"));
        }
        if self.q < 1 {
            return Err(Error::invalid("q must be at least 1"));
        }
        if !(self.width_lo > 0.0 && self.width_lo < self.width_hi) {
            return Err(Error::invalid("width range must satisfy 0 < width_lo < width_hi"));
        }
        if self.folds < 2 {
            return Err(Error::invalid("folds must be at least 2"));
        }
        if self.p == Some(0) {
            return Err(Error::invalid("p must be at least 1"));
        }
        if self.tau_grid.is_empty() || self.tau_grid.iter().any(|t| !(*t >= 0.0)) {
            return Err(Error::invalid("tau_grid must be a non-empty list of non-negative values"));
        }
        Ok(())
    }

    pub fn cameras_for(&self, ds: &Dataset) -> Result<CameraPair> {
        match self.cameras {
            Some(c) => Ok(c),
            None => CameraPair::default_for(ds),
        }
    }

    pub fn grids(&self) -> MklGrids {
        let q = self.q;
        MklGrids {
            n_grid: self
                .n_grid
                .clone()
                .unwrap_or_else(|| (1..=q.saturating_sub(1).min(5)).collect()),
            tau_grid: self.tau_grid.clone(),
        }
    }

    pub fn cv_options(&self, seed: u64, cameras: CameraPair) -> CvOptions {
        CvOptions {
            folds: self.folds,
            seed,
            eps: self.eps,
            cameras,
        }
    }

    /// Canonical `key=value` text, one per line.
    pub fn canonical(&self) -> String {
        let join = |v: &[String]| v.join(",");
        let n_grid = match &self.n_grid {
            Some(g) => join(&g.iter().map(|n| n.to_string()).collect::<Vec<_>>()),
            None => "default".into(),
        };
        let cams = match self.cameras {
            Some(c) => format!("{},{}", c.probe, c.gallery),
            None => "default".into(),
        };
        format!(
            "train_fraction={}\neps={}\np={}\nq={}\nwidth_lo={}\nwidth_hi={}\nfolds={}\nn_grid={}\ntau_grid={}\ncameras={}\n",
            self.train_fraction,
            self.eps,
            self.p.map_or("full".to_string(), |p| p.to_string()),
            self.q,
            self.width_lo,
            self.width_hi,
            self.folds,
            n_grid,
            join(&self.tau_grid.iter().map(|t| t.to_string()).collect::<Vec<_>>()),
            cams,
        )
    }
}

/// Digest of everything that determines a run's output.
pub fn run_digest(ds: &Dataset, method: Method, trials: usize, base_seed: u64, cfg: &ExperimentConfig) -> String {
    use sha2::{Digest, Sha256};
    let text = format!(
        "method={method}\ntrials={trials}\nbase_seed={base_seed}\ndata={}\n{}",
        ds.fingerprint(),
        cfg.canonical()
    );
    hex::encode(Sha256::digest(text.as_bytes()))
}

/// A trained method for one split.
#[derive(Debug, Clone)]
pub struct MethodFit {
    pub model: KfdaModel,
    /// Per-kernel cross-validation results, multiple-kernel methods only.
    pub accuracies: Option<KernelAccuracies>,
}

/// RMS-heuristic base kernel for the training samples of `plan`.
pub fn heuristic_kernel(ds: &Dataset, plan: &SplitPlan) -> Result<KernelSpec> {
    KernelSpec::rbf(rms_width(ds, &plan.train_indices(ds))?)
}

/// `q` RBF kernels whose widths scale the RMS heuristic over the grid.
pub fn kernel_bank_specs(ds: &Dataset, plan: &SplitPlan, cfg: &ExperimentConfig) -> Result<Vec<KernelSpec>> {
    let base = rms_width(ds, &plan.train_indices(ds))?;
    if cfg.q == 1 {
        return Ok(vec![KernelSpec::rbf(base)?]);
    }
    width_grid(base, cfg.q, cfg.width_lo, cfg.width_hi)?
        .into_iter()
        .map(KernelSpec::rbf)
        .collect()
}

/// Trains `method` on the plan's training identities. The euclidean
/// baseline has nothing to train and is rejected.
pub fn fit_method(ds: &Dataset, plan: &SplitPlan, method: Method, cfg: &ExperimentConfig) -> Result<MethodFit> {
    let train = plan.train_indices(ds);
    match method {
        Method::Euclidean => Err(Error::invalid("the euclidean baseline has no model to train")),
        Method::Kfda => {
            let kernel = KernelConfig::Single(heuristic_kernel(ds, plan)?);
            Ok(MethodFit {
                model: fit(ds, &train, &kernel, cfg.eps, cfg.p)?,
                accuracies: None,
            })
        }
        Method::NpMfml | Method::SmMfml => {
            let specs = kernel_bank_specs(ds, plan, cfg)?;
            let opts = cfg.cv_options(plan.trial_seed, plan.cameras());
            let acc = cv_kernel_accuracies(ds, &plan.train_ids, &specs, &opts)?;
            let variant = if method == Method::NpMfml { MklKind::Np } else { MklKind::Sm };
            let mkl = build_config(variant, &acc, ds, &plan.train_ids, &specs, &cfg.grids(), &opts)?;
            Ok(MethodFit {
                model: fit(ds, &train, &KernelConfig::Mkl(mkl), cfg.eps, cfg.p)?,
                accuracies: Some(acc),
            })
        }
    }
}

/// Per-rank accuracies averaged over trials.
#[derive(Debug, Clone, PartialEq)]
pub struct CmcReport {
    pub method: Method,
    /// Number of ranks R; rank k is stored at index k - 1.
    pub ranks: usize,
    pub mean_accuracy: Vec<f64>,
    /// One row per trial.
    pub per_trial: Vec<Vec<f64>>,
    pub trials: usize,
    pub config_digest: String,
    /// Probes without a true match in the gallery, summed over trials.
    pub excluded_probes: usize,
}

impl CmcReport {
    /// Mean accuracy at 1-based `rank`, clamped to the last rank.
    pub fn at(&self, rank: usize) -> f64 {
        self.mean_accuracy[rank.clamp(1, self.ranks) - 1]
    }

    pub fn rank1(&self) -> f64 {
        self.at(1)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("rank,mean_accuracy");
        for t in 1..=self.trials {
            let _ = write!(out, ",trial_{t}");
        }
        out.push('\n');
        for k in 0..self.ranks {
            let _ = write!(out, "{},{}", k + 1, self.mean_accuracy[k]);
            for row in &self.per_trial {
                let _ = write!(out, ",{}", row[k]);
            }
            out.push('\n');
        }
        out
    }

    /// Rank-1/5/10/20 summary line.
    pub fn summary(&self) -> String {
        let mut s = format!("{}:", self.method);
        for k in [1, 5, 10, 20] {
            let _ = write!(s, " rank-{k}={:.2}%", 100.0 * self.at(k));
        }
        s
    }
}

struct TrialOutcome {
    curves: Vec<Vec<f64>>,
    excluded: usize,
}

/// Runs one split with seed `seed` and returns one CMC curve per requested
/// subspace dimension (a single full curve when `p_values` is empty).
fn run_trial(
    ds: &Dataset,
    method: Method,
    seed: u64,
    cfg: &ExperimentConfig,
    p_values: &[usize],
) -> Result<TrialOutcome> {
    let plan = make_split_with(ds, seed, cfg.train_fraction, cfg.cameras_for(ds)?)?;
    let probes = plan.probe_indices(ds);
    let gallery = plan.gallery_indices(ds);
    let fitted = match method {
        Method::Euclidean => None,
        _ => Some(fit_method(ds, &plan, method, cfg)?),
    };
    let mut curves = Vec::new();
    let mut excluded = 0;
    let mut score = |scorer: Scorer<'_>| -> Result<()> {
        let (results, missing) = rank_all(scorer, ds, &probes, &gallery)?;
        excluded = missing;
        curves.push(cmc(&results, gallery.len())?);
        Ok(())
    };
    match &fitted {
        None => score(Scorer::Euclidean)?,
        Some(f) if p_values.is_empty() => score(Scorer::Kfda(&f.model))?,
        Some(f) => {
            for &p in p_values {
                if p > f.model.p() {
                    return Err(Error::invalid(format!(
                        "subspace dimension {p} exceeds c - 1 = {}",
                        f.model.p()
                    )));
                }
                let truncated = f.model.truncate(p)?;
                score(Scorer::Kfda(&truncated))?;
            }
        }
    }
    Ok(TrialOutcome { curves, excluded })
}

fn run_all_trials(
    ds: &Dataset,
    method: Method,
    trials: usize,
    base_seed: u64,
    cfg: &ExperimentConfig,
    p_values: &[usize],
) -> Result<Vec<TrialOutcome>> {
    cfg.validate()?;
    if trials == 0 {
        return Err(Error::invalid("trials must be at least 1"));
    }
    (0..trials)
        .into_par_iter()
        .map(|t| {
            run_trial(ds, method, base_seed.wrapping_add(t as u64), cfg, p_values)
                .map_err(|e| e.context(format!("trial {t}")))
        })
        .collect()
}

fn average(rows: &[Vec<f64>], ranks: usize) -> Vec<f64> {
    (0..ranks)
        .map(|k| rows.iter().map(|r| r[k]).sum::<f64>() / rows.len() as f64)
        .collect()
}

/// Repeats split, train and rank `trials` times; trial `t` uses seed
/// `base_seed + t`.
pub fn run_trials(
    ds: &Dataset,
    method: Method,
    trials: usize,
    base_seed: u64,
    cfg: &ExperimentConfig,
) -> Result<CmcReport> {
    let outcomes = run_all_trials(ds, method, trials, base_seed, cfg, &[])?;
    let ranks = outcomes.iter().map(|o| o.curves[0].len()).min().unwrap_or(0);
    let per_trial: Vec<Vec<f64>> = outcomes.iter().map(|o| o.curves[0][..ranks].to_vec()).collect();
    Ok(CmcReport {
        method,
        ranks,
        mean_accuracy: average(&per_trial, ranks),
        per_trial,
        trials,
        config_digest: run_digest(ds, method, trials, base_seed, cfg),
        excluded_probes: outcomes.iter().map(|o| o.excluded).sum(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub p: usize,
    pub rank1_mean: f64,
}

/// Rank-1 accuracy per subspace dimension, keeping the leading `p`
/// discriminants of each trial's model.
pub fn dimension_sweep(
    ds: &Dataset,
    method: Method,
    p_values: &[usize],
    trials: usize,
    base_seed: u64,
    cfg: &ExperimentConfig,
) -> Result<Vec<SweepRow>> {
    if method == Method::Euclidean {
        return Err(Error::invalid("the euclidean baseline has no subspace to sweep"));
    }
    if p_values.is_empty() || p_values.contains(&0) {
        return Err(Error::invalid("sweep needs a non-empty list of positive p values"));
    }
    let mut full = cfg.clone();
    full.p = None;
    let outcomes = run_all_trials(ds, method, trials, base_seed, &full, p_values)?;
    Ok(p_values
        .iter()
        .enumerate()
        .map(|(i, &p)| SweepRow {
            p,
            rank1_mean: outcomes.iter().map(|o| o.curves[i][0]).sum::<f64>() / outcomes.len() as f64,
        })
        .collect())
}

pub fn sweep_to_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("p,rank1_mean\n");
    for r in rows {
        let _ = writeln!(out, "{},{}", r.p, r.rank1_mean);
    }
    out
}
