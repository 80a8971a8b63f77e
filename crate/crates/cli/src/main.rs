//! `drp`: simulate data, estimate and learn drift-robust policies, evaluate
//! them on potential-outcome test sets.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use driftrobust::nuisance::BasisSpec;
use driftrobust::Error;
use serde_json::json;

use config::{
    CommandConfig, EstimateConfig, EvaluateConfig, LearnConfig, NuisanceSettings, PropensityChoice, RegressionChoice,
    RunConfig, SimulateConfig,
};

#[derive(Parser)]
#[command(name = "drp", version, about = "Policy evaluation and learning robust to concept drift")]
struct Cli {
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a dataset from the linear-boundary design on the unit 5-ball.
    Simulate {
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        seed: SeedArg,
        #[arg(long)]
        out: PathBuf,
        /// Test table: every potential outcome instead of the logged action.
        #[arg(long)]
        test: bool,
        /// Same as --test.
        #[arg(long)]
        with_potential_outcomes: bool,
        /// Omit the mu/sigma columns from a potential-outcome table.
        #[arg(long)]
        no_metadata: bool,
    },
    /// Cross-fitted robust value of a policy on logged data.
    Estimate {
        #[arg(long)]
        data: PathBuf,
        /// `rings`, `constant:<a>`, inline tree JSON, or a tree JSON file.
        #[arg(long)]
        policy: String,
        /// Radius; a comma-separated list evaluates all with nuisances fitted at the first.
        #[arg(long, value_delimiter = ',', required = true)]
        delta: Vec<f64>,
        #[command(flatten)]
        nuisance: NuisanceArgs,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
    /// Learn a depth-limited policy tree.
    Learn {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        delta: f64,
        #[arg(long, default_value_t = 2)]
        depth: usize,
        /// Also learn the joint-shift comparator and write a comparison.
        #[arg(long, value_enum)]
        baseline: Option<BaselineKind>,
        /// Hold out this fraction of rows for an out-of-sample report.
        #[arg(long)]
        eval_fraction: Option<f64>,
        #[command(flatten)]
        nuisance: NuisanceArgs,
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Empirical robust value of a policy on a potential-outcome test table.
    Evaluate {
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        policy: String,
        #[arg(long)]
        delta: f64,
        /// Also report the worst mean over this many KL-sphere perturbations.
        #[arg(long)]
        kl_sphere: Option<usize>,
        #[command(flatten)]
        seed: SeedArg,
        #[command(flatten)]
        basis: BasisArgs,
        #[arg(long, default_value = "evaluation.json")]
        out: PathBuf,
    },
    /// Re-run a command from a config file it wrote.
    Replay { config: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum BaselineKind {
    Joint,
}

#[derive(Args)]
struct SeedArg {
    /// Root seed; DRP_SEED overrides it when set.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum BasisKind {
    Spline,
    Polynomial,
}

#[derive(Args)]
struct BasisArgs {
    /// Dual-field basis (default: spline, or quadratic polynomial above 10 covariates).
    #[arg(long, value_enum)]
    basis: Option<BasisKind>,
    #[arg(long, default_value_t = 4)]
    knots: usize,
    #[arg(long, default_value_t = 2)]
    degree: usize,
}

impl BasisArgs {
    fn spec(&self) -> Option<BasisSpec> {
        self.basis.map(|b| match b {
            BasisKind::Spline => BasisSpec::AdditiveSpline { knots: self.knots },
            BasisKind::Polynomial => BasisSpec::Polynomial { degree: self.degree },
        })
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PropensityArg {
    Trees,
    Logistic,
    Uniform,
}

#[derive(Clone, Copy, ValueEnum)]
enum RegressionArg {
    Trees,
    Kernel,
    Zero,
}

#[derive(Args)]
struct NuisanceArgs {
    #[arg(long, default_value_t = 3)]
    folds: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[command(flatten)]
    basis: BasisArgs,
    #[arg(long, value_enum, default_value = "trees")]
    propensity: PropensityArg,
    #[arg(long, value_enum, default_value = "trees")]
    regression: RegressionArg,
    #[arg(long, default_value_t = 0.01)]
    clip_floor: f64,
    /// Number of actions when some never appear in the data.
    #[arg(long)]
    num_actions: Option<usize>,
}

fn resolve_seed(flag: u64) -> Result<u64, Error> {
    match std::env::var("DRP_SEED") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::invalid(format!("DRP_SEED must be an unsigned integer, got {v:?}"))),
        Err(_) => Ok(flag),
    }
}

impl NuisanceArgs {
    fn settings(&self) -> Result<NuisanceSettings, Error> {
        Ok(NuisanceSettings {
            folds: self.folds,
            seed: resolve_seed(self.seed.seed)?,
            basis: self.basis.spec(),
            propensity: match self.propensity {
                PropensityArg::Trees => PropensityChoice::Trees,
                PropensityArg::Logistic => PropensityChoice::Logistic,
                PropensityArg::Uniform => PropensityChoice::Uniform,
            },
            regression: match self.regression {
                RegressionArg::Trees => RegressionChoice::Trees,
                RegressionArg::Kernel => RegressionChoice::NadarayaWatson,
                RegressionArg::Zero => RegressionChoice::Zero,
            },
            clip_floor: self.clip_floor,
        })
    }
}

fn resolve(command: Command) -> Result<RunConfig, Error> {
    let command = match command {
        Command::Simulate {
            n,
            seed,
            out,
            test,
            with_potential_outcomes,
            no_metadata,
        } => CommandConfig::Simulate(SimulateConfig {
            n,
            seed: resolve_seed(seed.seed)?,
            out,
            potential_outcomes: test || with_potential_outcomes,
            metadata: !no_metadata,
        }),
        Command::Estimate {
            data,
            policy,
            delta,
            nuisance,
            out,
        } => CommandConfig::Estimate(EstimateConfig {
            data,
            num_actions: nuisance.num_actions,
            policy,
            delta,
            nuisance: nuisance.settings()?,
            out,
        }),
        Command::Learn {
            data,
            delta,
            depth,
            baseline,
            eval_fraction,
            nuisance,
            out_dir,
        } => CommandConfig::Learn(LearnConfig {
            data,
            num_actions: nuisance.num_actions,
            delta,
            depth,
            baseline: baseline.is_some(),
            eval_fraction,
            nuisance: nuisance.settings()?,
            out_dir,
        }),
        Command::Evaluate {
            test,
            policy,
            delta,
            kl_sphere,
            seed,
            basis,
            out,
        } => CommandConfig::Evaluate(EvaluateConfig {
            test,
            policy,
            delta,
            kl_sphere,
            seed: resolve_seed(seed.seed)?,
            basis: basis.spec(),
            out,
        }),
        Command::Replay { config } => {
            let text = std::fs::read_to_string(&config)?;
            return Ok(serde_json::from_str(&text)?);
        }
    };
    Ok(RunConfig::new(command))
}

fn run(cli: Cli) -> Result<(), Error> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::invalid(format!("cannot configure {t} threads: {e}")))?;
    }
    let cfg = resolve(cli.command)?;
    commands::execute(&cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::FAILURE
        }
    }
}
