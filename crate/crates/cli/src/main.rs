use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand, ValueEnum};
use renyi_cli::{
    cluster_summary, cmd_cluster, cmd_eval, cmd_train, parse_seeds, toy_config, toy_table, ExperimentConfig,
    RunOptions, Split,
};
use renyi_core::faircluster::toy_dataset;

#[derive(Parser)]
#[command(name = "renyi", version, about = "Rényi-fair classification and clustering experiments")]
struct Cli {
    /// Worker threads for grid points (0 = all cores).
    #[arg(long, short = 'j', global = true, default_value_t = 0)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct SweepArgs {
    /// Experiment config (TOML).
    #[arg(long, short)]
    config: PathBuf,
    /// Output directory; defaults to the config's `output_dir`.
    #[arg(long, short)]
    out: Option<PathBuf>,
    /// Comma-separated seeds replacing the config's list.
    #[arg(long)]
    seeds: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Test,
}

#[derive(Subcommand)]
enum Command {
    /// Train one classifier per (λ, seed) and evaluate on both splits.
    Train(SweepArgs),
    /// Run fair K-means per (λ, seed).
    Cluster(SweepArgs),
    /// Evaluate a checkpoint on the config's data source.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, short)]
        config: PathBuf,
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
    },
    /// Planted five-cluster demo: proportion table for each λ.
    DemoToy {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Comma-separated λ values.
        #[arg(long, default_value = "0,1000")]
        lambdas: String,
        #[arg(long, short, default_value = "runs/demo_toy")]
        out: PathBuf,
    },
}

fn options(args: &SweepArgs, jobs: usize) -> Result<RunOptions> {
    Ok(RunOptions {
        out: args.out.clone(),
        seeds: args.seeds.as_deref().map(parse_seeds).transpose()?,
        jobs,
    })
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Train(args) => {
            let cfg = ExperimentConfig::from_file(&args.config)?;
            let sweep = cmd_train(&cfg, &options(&args, cli.jobs)?)?;
            print!("{}", renyi_cli::train_summary(&sweep.rows));
            println!("results in {}", sweep.out_dir.display());
            Ok(sweep.complete())
        }
        Command::Cluster(args) => {
            let cfg = ExperimentConfig::from_file(&args.config)?;
            let sweep = cmd_cluster(&cfg, &options(&args, cli.jobs)?)?;
            print!("{}", cluster_summary(&sweep.rows));
            println!("results in {}", sweep.out_dir.display());
            Ok(sweep.complete())
        }
        Command::Eval { checkpoint, config, split } => {
            let cfg = ExperimentConfig::from_file(&config)?;
            let split = match split {
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            println!("{}", cmd_eval(&checkpoint, &cfg, split)?.to_json());
            Ok(true)
        }
        Command::DemoToy { seed, lambdas, out } => {
            let grid = lambdas
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()?;
            let cfg = toy_config(seed, grid);
            cfg.validate()?;
            let opts = RunOptions {
                out: Some(out),
                seeds: None,
                jobs: cli.jobs,
            };
            let sweep = cmd_cluster(&cfg, &opts)?;
            print!("{}", toy_table(&sweep, &toy_dataset(seed).planted));
            println!("results in {}", sweep.out_dir.display());
            Ok(sweep.complete())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("some grid points failed; partial results were written");
            ExitCode::FAILURE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
