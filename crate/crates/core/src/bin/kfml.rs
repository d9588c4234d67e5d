use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kfml::cli::{cmd_cv, cmd_evaluate, cmd_sweep, cmd_synth, cmd_train, parse_p_values, RunConfig};
use kfml::synth::SynthParams;

#[derive(Parser)]
#[command(name = "kfml", version, about = "Kernel Fisher discriminant metric learning")]
struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on the first split and save it.
    Train(Run),
    /// Averaged CMC over repeated splits, or one split for a saved model.
    Evaluate {
        #[command(flatten)]
        run: Run,
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Cross-validated per-kernel accuracies and the chosen N and tau.
    Cv(Run),
    /// Rank-1 accuracy against subspace dimension.
    Sweep {
        #[command(flatten)]
        run: Run,
        /// Comma-separated dimensions; defaults to 1..=c-1.
        #[arg(long)]
        p_values: Option<String>,
    },
    /// Write a synthetic two-camera feature CSV.
    Synth {
        #[arg(long, default_value_t = 40)]
        identities: usize,
        #[arg(long, default_value_t = 2)]
        views: usize,
        #[arg(long, default_value_t = 20)]
        d: usize,
        #[arg(long, default_value_t = 0.6)]
        noise: f64,
        #[arg(long, default_value_t = 20.0)]
        view_offset: f64,
        #[arg(long, default_value_t = 1.0)]
        spread: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct Run {
    /// key=value settings file; flags override it.
    #[arg(long, allow_hyphen_values = true)]
    config: Option<PathBuf>,
    #[arg(long, allow_hyphen_values = true)]
    method: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    features: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    out: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    seed: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    trials: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    train_fraction: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    eps: Option<String>,
    /// Number of discriminants, or `full` for c-1.
    #[arg(long, allow_hyphen_values = true)]
    p: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    q: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    width_lo: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    width_hi: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    folds: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    n_grid: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    tau_grid: Option<String>,
}

impl Run {
    fn config(&self) -> kfml::Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        let flags = [
            ("method", &self.method),
            ("features", &self.features),
            ("out", &self.out),
            ("base_seed", &self.seed),
            ("trials", &self.trials),
            ("train_fraction", &self.train_fraction),
            ("eps", &self.eps),
            ("p", &self.p),
            ("q", &self.q),
            ("width_lo", &self.width_lo),
            ("width_hi", &self.width_hi),
            ("folds", &self.folds),
            ("n_grid", &self.n_grid),
            ("tau_grid", &self.tau_grid),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, v)?;
            }
        }
        Ok(cfg)
    }
}

fn run(cli: Cli) -> kfml::Result<String> {
    match cli.command {
        Command::Train(run) => cmd_train(&run.config()?),
        Command::Evaluate { run, model } => cmd_evaluate(&run.config()?, model.as_deref()),
        Command::Cv(run) => cmd_cv(&run.config()?),
        Command::Sweep { run, p_values } => {
            let p = p_values.as_deref().map(parse_p_values).transpose()?.unwrap_or_default();
            cmd_sweep(&run.config()?, &p)
        }
        Command::Synth {
            identities,
            views,
            d,
            noise,
            view_offset,
            spread,
            seed,
            out,
        } => {
            let params = SynthParams {
                identities,
                views,
                d,
                noise,
                view_offset,
                spread,
                seed,
            };
            cmd_synth(&params, out)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
