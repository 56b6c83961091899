mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{BackendKind, Overrides};
use error::{usage, CliResult};

#[derive(Parser, Debug)]
#[command(name = "oncosurv", version, about = "Predict chemotherapy failure from clinical notes and structured records")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct GlobalArgs {
    /// TOML configuration file.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Directory for every artifact (env ONCOSURV_OUTPUT_DIR).
    #[arg(long, short, global = true)]
    output_dir: Option<PathBuf>,
    /// Seed for synthesis, the train/test split and the forest (env ONCOSURV_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads, 0 = all cores, 1 = sequential (env ONCOSURV_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// More log output; repeat for debug.
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic corpus with EMR, plans and gold labels to <output_dir>/data.
    Synthesize {
        #[arg(long)]
        n_patients: Option<usize>,
    },
    /// Extract phenotype and outcome records from every note.
    Extract {
        #[arg(long)]
        corpus: Option<PathBuf>,
        /// Gold labels to score against.
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
        #[arg(long)]
        endpoint: Option<String>,
        #[arg(long)]
        model: Option<String>,
        /// Skip malformed corpus lines instead of failing.
        #[arg(long)]
        lenient: bool,
    },
    /// Join extractions with EMR and treatment plans into a feature matrix.
    Featurize {
        #[arg(long)]
        emr: Option<PathBuf>,
        #[arg(long)]
        plans: Option<PathBuf>,
        #[arg(long)]
        drugs: Option<PathBuf>,
        #[arg(long)]
        support_threshold: Option<usize>,
    },
    /// Fit the survival forest on the training split.
    Train,
    /// Score the forest on the held-out split and draw figures.
    Evaluate,
    /// Render report.md from the evaluation artifacts.
    Report,
    /// Extract, featurize, train, evaluate and report in one go.
    Run {
        #[arg(long)]
        gold: Option<PathBuf>,
        #[arg(long, value_enum)]
        backend: Option<BackendKind>,
    },
    /// Print the effective configuration as TOML.
    Config,
}

fn run(cli: Cli) -> CliResult<()> {
    let g = &cli.global;
    let mut flags = Overrides { output_dir: g.output_dir.clone(), seed: g.seed, workers: g.workers, ..Default::default() };
    match &cli.command {
        Command::Synthesize { n_patients } => flags.n_patients = *n_patients,
        Command::Extract { corpus, gold, backend, endpoint, model, lenient } => {
            flags.corpus = corpus.clone();
            flags.gold = gold.clone();
            flags.backend = *backend;
            flags.endpoint = endpoint.clone();
            flags.model = model.clone();
            flags.lenient = *lenient;
        }
        Command::Featurize { emr, plans, drugs, support_threshold } => {
            flags.emr = emr.clone();
            flags.plans = plans.clone();
            flags.drugs = drugs.clone();
            flags.support_threshold = *support_threshold;
        }
        Command::Run { gold, backend } => {
            flags.gold = gold.clone();
            flags.backend = *backend;
        }
        Command::Train | Command::Evaluate | Command::Report | Command::Config => {}
    }
    let env = Overrides::from_env(|k| std::env::var(k).ok()).map_err(usage)?;
    let cfg = config::load(g.config.as_deref(), &env, &flags).map_err(usage)?;

    match cli.command {
        Command::Synthesize { .. } => commands::synthesize_cmd(&cfg),
        Command::Extract { .. } => commands::extract_cmd(&cfg),
        Command::Featurize { .. } => commands::featurize_cmd(&cfg),
        Command::Train => commands::train_cmd(&cfg),
        Command::Evaluate => commands::evaluate_cmd(&cfg),
        Command::Report => commands::report_cmd(&cfg),
        Command::Run { .. } => {
            commands::extract_cmd(&cfg)?;
            commands::featurize_cmd(&cfg)?;
            commands::train_cmd(&cfg)?;
            commands::evaluate_cmd(&cfg)?;
            commands::report_cmd(&cfg)
        }
        Command::Config => {
            print!("{}", toml::to_string(&cfg).map_err(usage)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.global.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
