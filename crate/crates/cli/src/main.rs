//! `zsslr`: synthesize data, train compatibility models, evaluate them and
//! analyze attribute influence from the command line.
//!
//! Exit codes: 0 success, 2 input error, 3 dimension or schema error,
//! 4 mode error, 1 anything else.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use zsslr_core::data::{EvalScope, SplitMode};
use zsslr_core::synth::SynthSpec;
use zsslr_core::Error;

use commands::{Analysis, SweepParam};
use config::ConfigArgs;

#[derive(Parser)]
#[command(name = "zsslr", version, about = "Zero-shot sign recognition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scope {
    Validation,
    Test,
}

impl From<Scope> for EvalScope {
    fn from(s: Scope) -> Self {
        match s {
            Scope::Validation => EvalScope::Validation,
            Scope::Test => EvalScope::Test,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Zsl,
    Gzsl,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset with planted structure.
    Synth {
        /// Target directory for manifest.json and features/.
        #[arg(long)]
        out: PathBuf,
        /// JSON generator spec; flags below override it.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum)]
        mode: Option<ModeArg>,
        /// Emit a hand stream.
        #[arg(long)]
        hand: bool,
        /// Samples per seen class held out for generalized evaluation.
        #[arg(long)]
        seen_holdout: Option<usize>,
        #[arg(long)]
        noise_sigma: Option<f64>,
    },
    /// Fit one model per repeat and summarize them.
    Train(ConfigArgs),
    /// Rank candidates for every evaluation sample.
    Predict {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        scope: Scope,
    },
    /// Top-k accuracy report.
    Eval {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        scope: Scope,
        /// Add a Monte-Carlo random-ranking row.
        #[arg(long)]
        random_baseline: bool,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
    },
    /// Attribute flip-influence analysis.
    Analyze {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        model: PathBuf,
        /// Per-class influence over correctly classified samples.
        #[arg(long, conflicts_with = "confusions", required_unless_present = "confusions")]
        correct: bool,
        /// Influence for the N most frequent confusions.
        #[arg(long, value_name = "N")]
        confusions: Option<usize>,
        /// Minimum classes carrying an attribute for it to be summarized.
        #[arg(long, default_value_t = 10)]
        min_affiliation: usize,
    },
    /// Expected accuracy of random rankings.
    Baseline {
        #[command(flatten)]
        config: ConfigArgs,
        /// Candidate count; without it the dataset's test scope is used.
        #[arg(long)]
        n_classes: Option<usize>,
        #[arg(long, default_value_t = 10_000)]
        trials: usize,
    },
    /// Validation accuracy across values of one hyperparameter.
    Sweep {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum)]
        param: SweepParam,
        #[arg(long, value_delimiter = ',', required = true, allow_hyphen_values = true)]
        values: Vec<f64>,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::MissingFile(_)
        | Error::Parse { .. }
        | Error::InvariantViolation(_)
        | Error::EmptySequence
        | Error::MissingHandStream(_)
        | Error::UnknownClass(_)
        | Error::EmptyCandidates
        | Error::DegenerateData(_)
        | Error::EmptyEvaluationSet
        | Error::NoMisclassifications => 2,
        Error::DimensionMismatch(_)
        | Error::SchemaMismatch(_)
        | Error::MissingReduction
        | Error::IndexOutOfRange { .. } => 3,
        Error::ModeWithoutAttributes | Error::Unsupported(_) => 4,
        Error::NonFiniteLoss { .. }
        | Error::SingularSystem(_)
        | Error::UnrankedClass(_)
        | Error::InstanceTooLarge(_)
        | Error::Io(_) => 1,
    }
}

fn synth_spec(
    spec: Option<PathBuf>,
    seed: Option<u64>,
    mode: Option<ModeArg>,
    hand: bool,
    seen_holdout: Option<usize>,
    noise_sigma: Option<f64>,
) -> zsslr_core::Result<SynthSpec> {
    let mut s = match spec {
        Some(p) => {
            if !p.is_file() {
                return Err(Error::MissingFile(p));
            }
            let raw = std::fs::read_to_string(&p)?;
            serde_json::from_str(&raw).map_err(|e| {
                Error::parse(format!("{} line {} column {}", p.display(), e.line(), e.column()), e)
            })?
        }
        None => SynthSpec::default(),
    };
    if let Some(seed) = seed {
        s.seed = seed;
    }
    if let Some(m) = mode {
        s.mode = match m {
            ModeArg::Zsl => SplitMode::Zsl,
            ModeArg::Gzsl => SplitMode::Gzsl,
        };
    }
    s.hand |= hand;
    if let Some(h) = seen_holdout {
        s.seen_holdout = h;
    }
    if let Some(n) = noise_sigma {
        s.noise_sigma = n;
    }
    Ok(s)
}

fn run(cli: Cli) -> zsslr_core::Result<()> {
    match cli.command {
        Command::Synth {
            out,
            spec,
            seed,
            mode,
            hand,
            seen_holdout,
            noise_sigma,
        } => commands::synth(&synth_spec(spec, seed, mode, hand, seen_holdout, noise_sigma)?, &out),
        Command::Train(c) => commands::train(&c.resolve()?),
        Command::Predict { config, model, scope } => commands::predict(&config.resolve()?, &model, scope.into()),
        Command::Eval {
            config,
            model,
            scope,
            random_baseline,
            trials,
        } => commands::eval(&config.resolve()?, &model, scope.into(), random_baseline.then_some(trials)),
        Command::Analyze {
            config,
            model,
            correct: _,
            confusions,
            min_affiliation,
        } => {
            let analysis = match confusions {
                Some(n) => Analysis::Confusions(n),
                None => Analysis::Correct { min_affiliation },
            };
            commands::analyze(&config.resolve()?, &model, analysis)
        }
        Command::Baseline {
            config,
            n_classes,
            trials,
        } => commands::baseline(&config.resolve()?, n_classes, trials),
        Command::Sweep { config, param, values } => commands::sweep(&config.resolve()?, param, &values),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}: {e}", e.kind());
            ExitCode::from(exit_code(&e))
        }
    }
}
