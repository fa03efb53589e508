use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use surfrl::experiment::{self, metrics, ExperimentConfig, RunOutcome};

#[derive(Parser)]
#[command(name = "surfrl", version, about = "Surface-code decoding agents trained with policy reuse")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Mean lifetime of a single unprotected qubit.
    Baseline(RunArgs),
    /// Train a decoder from scratch.
    TrainScratch(RunArgs),
    /// Train a decoder reusing the policies given by --library.
    TrainPpr(RunArgs),
    /// Scratch stage followed by reuse stages at increasing error rates.
    Curriculum {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated, strictly increasing error rates.
        #[arg(long, value_delimiter = ',', required = true)]
        p_errs: Vec<f64>,
    },
    /// Greedy play of a saved policy (no learning).
    Evaluate {
        #[command(flatten)]
        run: RunArgs,
        /// Checkpoint stem or library directory; the first policy is used.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Rolling-mean and histogram series from an episodes.csv.
    PlotData {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long, default_value_t = 100)]
        window: usize,
        #[arg(long, default_value_t = 50)]
        bin: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Desk,
    PaperD5,
}

/// Config file, then profile defaults, then individual flags.
#[derive(Args, Default)]
struct RunArgs {
    /// JSON config; flags given on the command line take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start from a built-in profile instead of the defaults.
    #[arg(long, value_enum, conflicts_with = "config")]
    profile: Option<Profile>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    volume_depth: Option<usize>,
    #[arg(long)]
    p_err: Option<f64>,
    #[arg(long)]
    p_phys: Option<f64>,
    #[arg(long)]
    p_meas: Option<f64>,
    #[arg(long)]
    episodes: Option<u64>,
    #[arg(long)]
    max_steps: Option<u64>,
    #[arg(long)]
    replay_capacity: Option<usize>,
    #[arg(long)]
    lr: Option<f32>,
    #[arg(long)]
    gamma: Option<f32>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    target_update: Option<u64>,
    #[arg(long)]
    epsilon_start: Option<f64>,
    #[arg(long)]
    epsilon_min: Option<f64>,
    #[arg(long)]
    epsilon_decay: Option<f64>,
    #[arg(long)]
    tau0: Option<f64>,
    #[arg(long)]
    delta_tau: Option<f64>,
    #[arg(long)]
    psi0: Option<f64>,
    #[arg(long)]
    nu: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Library checkpoint or directory; repeat for several.
    #[arg(long)]
    library: Vec<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    referee: Option<String>,
    #[arg(long)]
    hidden_width: Option<usize>,
    #[arg(long)]
    rolling_window: Option<usize>,
    #[arg(long)]
    histogram_bin: Option<u64>,
    #[arg(long)]
    lifetime_threshold: Option<f64>,
    /// Trials for the baseline subcommand.
    #[arg(long)]
    trials: Option<u64>,
}

macro_rules! apply {
    ($cfg:ident, $args:ident: $($field:ident),*) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$field = v; })*
    };
}

impl RunArgs {
    fn resolve(&self, mode: &str) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, self.profile) {
            (Some(path), _) => {
                ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?
            }
            (None, Some(Profile::Desk)) => ExperimentConfig::desk(),
            (None, Some(Profile::PaperD5)) => ExperimentConfig::paper_d5(),
            (None, None) => ExperimentConfig::default(),
        };
        cfg.mode = mode.to_string();
        apply!(cfg, self: d, episodes, max_steps, replay_capacity, lr, gamma, batch_size, target_update,
            epsilon_start, epsilon_min, epsilon_decay, tau0, delta_tau, psi0, nu, seed, referee,
            hidden_width, rolling_window, histogram_bin);
        if self.volume_depth.is_some() {
            cfg.volume_depth = self.volume_depth;
        }
        if self.p_err.is_some() {
            cfg.p_err = self.p_err;
            cfg.p_phys = None;
            cfg.p_meas = None;
        }
        if self.p_phys.is_some() {
            cfg.p_phys = self.p_phys;
        }
        if self.p_meas.is_some() {
            cfg.p_meas = self.p_meas;
        }
        if !self.library.is_empty() {
            cfg.library = self.library.clone();
        }
        if self.output_dir.is_some() {
            cfg.output_dir = self.output_dir.clone();
        }
        if self.lifetime_threshold.is_some() {
            cfg.lifetime_threshold = self.lifetime_threshold;
        }
        if let Some(t) = self.trials {
            cfg.baseline_trials = t;
        }
        Ok(cfg)
    }
}

fn report(outcome: &RunOutcome) -> serde_json::Value {
    json!({
        "meta": outcome.meta,
        "summary": outcome.summary,
        "baseline_mean_lifetime": outcome.baseline_mean_lifetime,
    })
}

fn run(cli: Cli) -> Result<serde_json::Value> {
    let value = match cli.command {
        Command::Baseline(args) => report(&experiment::run_experiment(&args.resolve("baseline")?)?),
        Command::TrainScratch(args) => report(&experiment::run_experiment(&args.resolve("scratch")?)?),
        Command::TrainPpr(args) => report(&experiment::run_experiment(&args.resolve("ppr")?)?),
        Command::Evaluate { run, policy } => {
            let mut cfg = run.resolve("evaluate")?;
            if let Some(p) = policy {
                cfg.library = vec![p];
            }
            if cfg.library.is_empty() {
                bail!("evaluate needs --policy or a library entry in the config");
            }
            report(&experiment::run_experiment(&cfg)?)
        }
        Command::Curriculum { run, p_errs } => {
            let cfg = run.resolve("curriculum")?;
            let out = experiment::run_curriculum(&cfg, &p_errs)?;
            let stages: Vec<_> = out
                .stages
                .iter()
                .zip(&p_errs)
                .map(|(s, p)| json!({ "p_err": p, "summary": s.summary }))
                .collect();
            json!({ "stages": stages, "library_size": out.library.len() })
        }
        Command::PlotData {
            input,
            output,
            window,
            bin,
        } => {
            metrics::plot_data(&input, &output, window, bin)?;
            json!({ "written": [output.join(metrics::ROLLING_FILE), output.join(metrics::HISTOGRAM_FILE)] })
        }
    };
    Ok(value)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(value) => {
            println!("{}", serde_json::to_string_pretty(&value).expect("report serializes"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
