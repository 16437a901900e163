use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use contracting_harness::experiment::{experiment_dir, format_summary};
use contracting_harness::solve::{solve, Family, SolveRequest};
use contracting_harness::{export_plot_data, run_experiment, CellSelector, EnvSpec, ExperimentConfig, HarnessError, OUTPUT_ENV};
use contracting_learn::Algorithm;

#[derive(Parser)]
#[command(name = "contracting", version, about = "Formal contracting experiments for multi-agent games")]
struct Cli {
    /// Root directory for run outputs.
    #[arg(long, global = true, env = OUTPUT_ENV, default_value = "runs")]
    output: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the contracting game of a one-shot environment exactly.
    Solve(SolveArgs),
    /// Train a single algorithm on one environment.
    Train(TrainArgs),
    /// Run every cell of an experiment config.
    Run {
        config: PathBuf,
    },
    /// Aggregate a metrics CSV into per-cell learning curves.
    ExportPlots(ExportArgs),
    /// Print an environment's constants.
    Envcard {
        env: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Rule,
    Signing,
    Null,
}

#[derive(Args)]
struct SolveArgs {
    #[arg(long)]
    env: String,
    #[arg(long, default_value_t = 2)]
    agents: usize,
    #[arg(long, value_enum, default_value = "rule")]
    family: FamilyArg,
    #[arg(long, default_value_t = 0.25)]
    step: f64,
    /// Investment levels for public goods.
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    levels: Vec<f64>,
    /// Use the coordination-game Stag Hunt table.
    #[arg(long)]
    canonical: bool,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    env: String,
    #[arg(long)]
    algorithm: String,
    #[arg(long, default_value_t = 2)]
    agents: usize,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    max_gift: Option<f64>,
    /// Hyperparameter override, `key=value` with a TOML value.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Environment parameter, `key=value` with a TOML value.
    #[arg(long = "param", value_name = "KEY=VALUE")]
    params: Vec<String>,
}

#[derive(Args)]
struct ExportArgs {
    metrics: PathBuf,
    #[arg(long)]
    env: Option<String>,
    #[arg(long)]
    agents: Option<usize>,
    #[arg(long)]
    algorithm: Option<String>,
    /// Directory for series files; defaults to `plots` next to the CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_assignments(items: &[String]) -> Result<toml::Table, HarnessError> {
    let mut table = toml::Table::new();
    for item in items {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("expected KEY=VALUE, got '{item}'")))?;
        let doc: toml::Table = format!("v = {v}")
            .parse()
            .or_else(|_| format!("v = {:?}", v).parse())
            .map_err(|e: toml::de::Error| HarnessError::Config(format!("{item}: {e}")))?;
        table.insert(k.trim().to_string(), doc["v"].clone());
    }
    Ok(table)
}

fn algorithm(s: &str) -> Result<Algorithm, HarnessError> {
    s.parse().map_err(|e: contracting_learn::LearnError| HarnessError::Config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Solve(a) => {
            let family = match a.family {
                FamilyArg::Rule => Family::Rule,
                FamilyArg::Signing => Family::RuleWithSigning,
                FamilyArg::Null => Family::Null,
            };
            let req = SolveRequest {
                env: a.env,
                agents: a.agents,
                family,
                grid_step: a.step,
                levels: a.levels,
                canonical_stag_hunt: a.canonical,
            };
            println!("{}", solve(&req)?);
        }
        Command::Train(a) => {
            let mut env = EnvSpec::new(a.env);
            env.params = parse_assignments(&a.params)?;
            let alg = algorithm(&a.algorithm)?;
            let mut config = ExperimentConfig::new(format!("train-{}-{}", env.id, alg), env, vec![alg]);
            config.agents = vec![a.agents];
            config.seeds = vec![a.seed];
            config.budget = a.budget;
            config.max_gift = a.max_gift;
            config.hyperparams = parse_assignments(&a.overrides)?;
            config.output = cli.output;
            let summary = run_experiment(&config)?;
            print!("{}", format_summary(&summary.cells));
            println!("outputs in {}", summary.dir.display());
        }
        Command::Run { config } => {
            let mut config = ExperimentConfig::load(&config)?;
            if config.output.is_relative() {
                config.output = cli.output.join(&config.output);
            }
            let summary = run_experiment(&config)?;
            if summary.resumed > 0 {
                println!("resumed {} finished cells", summary.resumed);
            }
            print!("{}", format_summary(&summary.cells));
            println!("outputs in {}", experiment_dir(&config).display());
        }
        Command::ExportPlots(a) => {
            let selector = CellSelector {
                env: a.env,
                num_agents: a.agents,
                algorithm: a.algorithm.as_deref().map(algorithm).transpose()?,
            };
            let out = a.out.unwrap_or_else(|| a.metrics.parent().unwrap_or(&cli.output).join("plots"));
            for s in export_plot_data(&a.metrics, &selector, &out)? {
                println!("{} ({} points)", s.path.display(), s.points.len());
            }
        }
        Command::Envcard { env } => {
            let card = contracting_core::envs::env_card(&env).map_err(|e| HarnessError::Config(e.to_string()))?;
            print!("{card}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
