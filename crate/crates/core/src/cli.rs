//! Command implementations behind the `kfml` binary.
//!
//! Settings come from an optional flat `key=value` file followed by
//! overrides, both applied through [`RunConfig::set`]. Each command writes
//! its files under `out` and returns the text meant for standard output.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::dataset::{load_features, make_split_with, write_features, FeatureFormat};
use crate::error::{Error, Result};
use crate::eval::{
    cmc, dimension_sweep, fit_method, kernel_bank_specs, rank_all, run_trials, sweep_to_csv, ExperimentConfig,
    Method,
};
use crate::metric::Scorer;
use crate::mkl::{build_config, cv_kernel_accuracies, MklKind, MklVariant};
use crate::persist::{load_model, save_model};
use crate::synth::{synthesize, SynthParams};

pub const MODEL_FILE: &str = "model.kfml";
pub const TRAIN_LOG_FILE: &str = "train.log";
pub const CMC_FILE: &str = "cmc.csv";
pub const CV_FILE: &str = "cv.csv";
pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    pub features: Option<PathBuf>,
    pub trials: usize,
    pub base_seed: u64,
    pub out: PathBuf,
    pub experiment: ExperimentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            method: Method::Kfda,
            features: None,
            trials: 10,
            base_seed: 0,
            out: PathBuf::from("."),
            experiment: ExperimentConfig::default(),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::invalid(format!("bad value `{value}` for `{key}`")))
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    value
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(|t| parse_num(key, t))
        .collect()
}

impl RunConfig {
    /// Sets one field by name. `seed` is accepted as an alias of `base_seed`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let e = &mut self.experiment;
        let value = value.trim();
        match key {
            "method" => self.method = value.parse()?,
            "features" => self.features = Some(PathBuf::from(value)),
            "trials" => self.trials = parse_num(key, value)?,
            "base_seed" | "seed" => self.base_seed = parse_num(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "train_fraction" => e.train_fraction = parse_num(key, value)?,
            "eps" => e.eps = parse_num(key, value)?,
            "p" => e.p = if value == "full" { None } else { Some(parse_num(key, value)?) },
            "q" => e.q = parse_num(key, value)?,
            "width_lo" => e.width_lo = parse_num(key, value)?,
            "width_hi" => e.width_hi = parse_num(key, value)?,
            "folds" => e.folds = parse_num(key, value)?,
            "n_grid" => e.n_grid = Some(parse_list(key, value)?),
            "tau_grid" => e.tau_grid = parse_list(key, value)?,
            _ => return Err(Error::invalid(format!("unknown setting `{key}`"))),
        }
        Ok(())
    }

    /// Applies a `key=value` file; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                row: i + 1,
                message: format!("expected key=value, found `{line}`"),
            })?;
            self.set(k.trim(), v).map_err(|e| match e {
                Error::InvalidInput(message) => Error::Parse { row: i + 1, message },
                other => other,
            })?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.apply_text(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.experiment.validate()?;
        if self.trials == 0 {
            return Err(Error::invalid("trials must be at least 1"));
        }
        match &self.features {
            None => Err(Error::invalid("no feature file given")),
            Some(p) if !p.is_file() => Err(Error::io(
                p,
                std::io::Error::new(std::io::ErrorKind::NotFound, "feature file not found"),
            )),
            Some(_) => Ok(()),
        }
    }

    fn features(&self) -> Result<&Path> {
        self.features
            .as_deref()
            .ok_or_else(|| Error::invalid("no feature file given"))
    }

    fn prepare_out(&self) -> Result<()> {
        fs::create_dir_all(&self.out).map_err(|e| Error::io(&self.out, e))
    }

    fn write_out(&self, name: &str, text: &str) -> Result<PathBuf> {
        let path = self.out.join(name);
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

/// Trains on the split of trial 0 and writes the model file and a training
/// log. Returns the model path.
pub fn cmd_train(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    if cfg.method == Method::Euclidean {
        return Err(Error::invalid("the euclidean baseline has no model to train"));
    }
    let ds = load_features(cfg.features()?, FeatureFormat::Csv)?;
    let e = &cfg.experiment;
    let plan = make_split_with(&ds, cfg.base_seed, e.train_fraction, e.cameras_for(&ds)?)?;
    let fitted = fit_method(&ds, &plan, cfg.method, e)?;
    let model = &fitted.model;
    cfg.prepare_out()?;
    let model_path = cfg.out.join(MODEL_FILE);
    save_model(model, &model_path)?;

    let mut log = String::new();
    let _ = writeln!(log, "method={}", cfg.method);
    let _ = writeln!(log, "data={}", ds.fingerprint());
    let _ = writeln!(log, "seed={}", cfg.base_seed);
    let _ = writeln!(log, "train_identities={}", plan.train_ids.len());
    let _ = writeln!(log, "train_samples={}", model.n());
    let _ = writeln!(log, "p={}", model.p());
    let _ = writeln!(log, "kernel={}", model.kernel());
    let _ = writeln!(log, "kernel_digest={}", model.kernel().digest());
    if let Some(acc) = &fitted.accuracies {
        let pis: Vec<String> = acc.pis.iter().map(f64::to_string).collect();
        let _ = writeln!(log, "cv_pis={}", pis.join(","));
    }
    let eig: Vec<String> = model.eigvals().iter().map(|v| format!("{v:e}")).collect();
    let _ = writeln!(log, "eigvals={}", eig.join(","));
    cfg.write_out(TRAIN_LOG_FILE, &log)?;
    log::info!("trained {} model with p = {}", cfg.method, model.p());
    Ok(format!("{}\n", model_path.display()))
}

/// Averaged CMC over the configured trials, or a single-split evaluation of
/// a saved model. Writes `cmc.csv` and returns the rank summary.
pub fn cmd_evaluate(cfg: &RunConfig, model: Option<&Path>) -> Result<String> {
    cfg.validate()?;
    let ds = load_features(cfg.features()?, FeatureFormat::Csv)?;
    let e = &cfg.experiment;
    cfg.prepare_out()?;
    match model {
        None => {
            let report = run_trials(&ds, cfg.method, cfg.trials, cfg.base_seed, e)?;
            if report.excluded_probes > 0 {
                log::warn!("{} probes had no match in the gallery", report.excluded_probes);
            }
            cfg.write_out(CMC_FILE, &report.to_csv())?;
            Ok(format!("{}\n", report.summary()))
        }
        Some(path) => {
            let model = load_model(path)?;
            let plan = make_split_with(&ds, cfg.base_seed, e.train_fraction, e.cameras_for(&ds)?)?;
            let gallery = plan.gallery_indices(&ds);
            let (results, _) = rank_all(Scorer::Kfda(&model), &ds, &plan.probe_indices(&ds), &gallery)?;
            let curve = cmc(&results, gallery.len())?;
            let mut csv = String::from("rank,mean_accuracy,trial_1\n");
            for (k, a) in curve.iter().enumerate() {
                let _ = writeln!(csv, "{},{a},{a}", k + 1);
            }
            cfg.write_out(CMC_FILE, &csv)?;
            let mut s = format!("{}:", path.display());
            for k in [1usize, 5, 10, 20] {
                let _ = write!(s, " rank-{k}={:.2}%", 100.0 * curve[k.clamp(1, curve.len()) - 1]);
            }
            Ok(s + "\n")
        }
    }
}

/// Per-kernel cross-validation on the split of trial 0; writes `cv.csv` and
/// returns the selected `N` and `tau`.
pub fn cmd_cv(cfg: &RunConfig) -> Result<String> {
    cfg.validate()?;
    let ds = load_features(cfg.features()?, FeatureFormat::Csv)?;
    let e = &cfg.experiment;
    let plan = make_split_with(&ds, cfg.base_seed, e.train_fraction, e.cameras_for(&ds)?)?;
    let specs = kernel_bank_specs(&ds, &plan, e)?;
    let opts = e.cv_options(plan.trial_seed, plan.cameras());
    let acc = cv_kernel_accuracies(&ds, &plan.train_ids, &specs, &opts)?;
    cfg.prepare_out()?;
    cfg.write_out(CV_FILE, &acc.to_csv())?;

    let grids = e.grids();
    let np = build_config(MklKind::Np, &acc, &ds, &plan.train_ids, &specs, &grids, &opts)?;
    let mut out = String::new();
    if let MklVariant::Np { n, weights } = &np.variant {
        let w: Vec<String> = weights.iter().map(f64::to_string).collect();
        let _ = writeln!(out, "N={n}");
        let _ = writeln!(out, "weights={}", w.join(","));
    }
    if specs.len() >= 2 {
        let sm = build_config(MklKind::Sm, &acc, &ds, &plan.train_ids, &specs, &grids, &opts)?;
        if let MklVariant::Sm { pair, tau } = sm.variant {
            let _ = writeln!(out, "pair={},{}", pair.0 + 1, pair.1 + 1);
            let _ = writeln!(out, "tau={tau}");
        }
    }
    Ok(out)
}

/// Rank-1 accuracy per subspace dimension; an empty `p_values` sweeps
/// `1..=c-1`. Writes `sweep.csv`.
pub fn cmd_sweep(cfg: &RunConfig, p_values: &[usize]) -> Result<String> {
    cfg.validate()?;
    let ds = load_features(cfg.features()?, FeatureFormat::Csv)?;
    let e = &cfg.experiment;
    let p_values = if p_values.is_empty() {
        let plan = make_split_with(&ds, cfg.base_seed, e.train_fraction, e.cameras_for(&ds)?)?;
        (1..plan.train_ids.len()).collect()
    } else {
        p_values.to_vec()
    };
    let rows = dimension_sweep(&ds, cfg.method, &p_values, cfg.trials, cfg.base_seed, e)?;
    let csv = sweep_to_csv(&rows);
    cfg.prepare_out()?;
    cfg.write_out(SWEEP_FILE, &csv)?;
    Ok(csv)
}

/// Writes a synthetic feature CSV to `path`.
pub fn cmd_synth(params: &SynthParams, path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let ds = synthesize(params)?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_features(&ds, path)?;
    Ok(format!("{}\n", path.display()))
}

/// Parses a comma-separated list of subspace dimensions.
pub fn parse_p_values(text: &str) -> Result<Vec<usize>> {
    parse_list("p_values", text)
}
