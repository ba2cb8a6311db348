//! `phasekit` command-line runner.
//!
//! Every subcommand writes `config.json`, `results.json` and its CSV tables into
//! one output directory. Exit codes: 0 success, 2 configuration error, 3 data
//! error, 4 numerical failure.

mod config;
mod error;
mod output;
mod runners;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, ExperimentKind};
use error::CliError;
use output::Common;

#[derive(Parser, Debug)]
#[command(name = "phasekit", version, about = "Phase features, noise-invariant two-sample tests and distribution regression")]
pub struct Cli {
    /// Master seed; every random draw derives from it.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Monte Carlo repetitions (sweeps), seeds (regress) or observed datasets (abc).
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// JSON experiment config; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Test level.
    #[arg(long, global = true)]
    alpha: Option<f64>,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run one two-sample test on two sample CSV files.
    TwoSample(TwoSampleArgs),
    /// Power of ME, SME and PhD tests on χ²(4)/4 against χ²(8)/8.
    PowerSim(SweepArgs),
    /// Type I error of ME, SME and PhD tests on χ²(4)/4 against itself.
    Type1Sim(SweepArgs),
    /// Paired-difference MMD, Fourier and phase distances over all bag pairs.
    PairedDiff(PairedDiffArgs),
    /// Symmetric fixtures with identical phase functions.
    Counterexample(CounterexampleArgs),
    /// Distribution regression under test-time noise.
    Regress(RegressArgs),
    /// Phase- or Fourier-summary ABC on the hierarchical model.
    Abc(AbcArgs),
    /// Train Fourier/phase networks and report learned-frequency norms.
    FreqnetTrain(FreqnetArgs),
    /// Write synthetic datasets as CSV.
    Fixtures(FixturesArgs),
}

impl Command {
    fn kind(&self) -> ExperimentKind {
        match self {
            Command::TwoSample(_) => ExperimentKind::TwoSample,
            Command::PowerSim(_) => ExperimentKind::PowerSweep,
            Command::Type1Sim(_) => ExperimentKind::Type1Sweep,
            Command::PairedDiff(_) => ExperimentKind::PairedDiffInvariance,
            Command::Counterexample(_) => ExperimentKind::Counterexample,
            Command::Regress(_) => ExperimentKind::RegressShift,
            Command::Abc(_) => ExperimentKind::AbcRun,
            Command::FreqnetTrain(_) => ExperimentKind::FreqnetDiag,
            Command::Fixtures(_) => ExperimentKind::Fixtures,
        }
    }
}

#[derive(Args, Debug, Default)]
pub struct TwoSampleArgs {
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long)]
    pub y: Option<PathBuf>,
    /// me, sme or phd (default sme).
    #[arg(long)]
    pub method: Option<String>,
    /// Number of ME test locations J.
    #[arg(long)]
    pub locations: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub permutations: Option<usize>,
    /// Number of PhD frequencies.
    #[arg(long)]
    pub frequencies: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct SweepArgs {
    /// Comma-separated subset of me,sme,phd.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Comma-separated noise-to-signal pairs `n1:n2`.
    #[arg(long, value_delimiter = ',')]
    pub noise: Option<Vec<String>>,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub dof_x: Option<f64>,
    #[arg(long)]
    pub dof_y: Option<f64>,
    #[arg(long)]
    pub locations: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub permutations: Option<usize>,
    #[arg(long)]
    pub frequencies: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct PairedDiffArgs {
    #[arg(long)]
    pub n_bags: Option<usize>,
    #[arg(long)]
    pub bag_size: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub frequencies: Option<usize>,
    /// Upper bound of the per-bag noise variance.
    #[arg(long)]
    pub noise_max: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct CounterexampleArgs {
    /// Points per sample.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub frequencies: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct RegressArgs {
    /// Labelled bag CSV; synthetic surrogate bags when absent.
    #[arg(long)]
    pub bags: Option<PathBuf>,
    /// Comma-separated subset of glrr,plrr,lgrr,pgrr,ggrr.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<String>>,
    /// Comma-separated test-time noise levels.
    #[arg(long, value_delimiter = ',')]
    pub sigmas: Option<Vec<f64>>,
    /// Fraction of bags (by group) held out, for `--bags`.
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
    #[arg(long)]
    pub bag_size: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub frequencies: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct AbcArgs {
    /// phase or fourier.
    #[arg(long)]
    pub summary: Option<String>,
    /// ridge or network.
    #[arg(long)]
    pub regressor: Option<String>,
    /// Kernel width ε.
    #[arg(long, conflicts_with = "ess_fraction")]
    pub epsilon: Option<f64>,
    /// Choose ε per dataset so that ESS ≥ fraction · K.
    #[arg(long)]
    pub ess_fraction: Option<f64>,
    /// Number of particles K.
    #[arg(long)]
    pub particles: Option<usize>,
    /// Observed sample CSV; simulated datasets when absent.
    #[arg(long)]
    pub observed: Option<PathBuf>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub bag_size: Option<usize>,
    #[arg(long)]
    pub n_train: Option<usize>,
}

#[derive(Args, Debug, Default)]
pub struct FreqnetArgs {
    /// Labelled bag CSV; synthetic surrogate bags when absent.
    #[arg(long)]
    pub bags: Option<PathBuf>,
    /// fourier, phase or both (default both).
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub frequencies: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f64>,
    #[arg(long)]
    pub no_batch_norm: bool,
    #[arg(long)]
    pub n_bags: Option<usize>,
    #[arg(long)]
    pub bag_size: Option<usize>,
    #[arg(long)]
    pub noise_sigma: Option<f64>,
}

#[derive(Args, Debug, Default)]
pub struct FixturesArgs {
    /// chisq, same-phase, regression, hier or all (default all).
    #[arg(long)]
    pub kind: Option<String>,
    /// Points per sample.
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub n_bags: Option<usize>,
    #[arg(long)]
    pub bag_size: Option<usize>,
}

fn compatible(file: ExperimentKind, cmd: ExperimentKind) -> bool {
    file == cmd || (file == ExperimentKind::PhdVsSme && cmd == ExperimentKind::PowerSweep)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let file = cli.config.as_deref().map(ExperimentConfig::load).transpose()?;
    let kind = match (&cli.command, &file) {
        (Some(cmd), Some(f)) if !compatible(f.experiment, cmd.kind()) => {
            return Err(CliError::Config(format!(
                "config file describes {:?} but the subcommand runs {:?}",
                f.experiment,
                cmd.kind()
            )))
        }
        (_, Some(f)) => f.experiment,
        (Some(cmd), None) => cmd.kind(),
        (None, None) => return Err(CliError::Config("give a subcommand or --config".into())),
    };
    let alpha = cli.alpha.or(file.as_ref().and_then(|f| f.alpha));
    if let Some(a) = alpha {
        if !(a > 0.0 && a < 1.0) {
            return Err(CliError::Config(format!("alpha must lie in (0, 1), got {a}")));
        }
    }
    let runs = cli.runs.or(file.as_ref().and_then(|f| f.runs));
    if runs == Some(0) {
        return Err(CliError::Config("runs must be at least 1".into()));
    }
    let common = Common {
        seed: cli.seed.or(file.as_ref().and_then(|f| f.seed)).unwrap_or(0),
        runs,
        alpha,
        output_dir: cli
            .out
            .clone()
            .or(file.as_ref().and_then(|f| f.output_dir.clone()))
            .unwrap_or_else(|| PathBuf::from("phasekit-out").join(kind.dir_name())),
    };
    let params = file.map(|f| f.parameters).unwrap_or_default();
    runners::dispatch(kind, cli.command, &params, common)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("phasekit: {e}");
            e.exit_code()
        }
    }
}
