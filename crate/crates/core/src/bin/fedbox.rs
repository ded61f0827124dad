use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedbox::harness::{self, ExperimentConfig, RunOptions};
use fedbox::theory::{self, TheoryInputs};
use fedbox::Error;

/// Output directory used when `--out` is not given.
const OUT_ENV: &str = "FEDBOX_OUT";

#[derive(Parser)]
#[command(name = "fedbox", version, about = "Byzantine-robust federated learning simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Override the seed of every config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory (default: $FEDBOX_OUT, then ./runs).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Print nothing but errors.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment (baseline plus attacked run).
    Run { config: PathBuf },
    /// Run every `*.toml` config in a directory.
    Sweep { config_dir: PathBuf },
    /// Tabulate existing logs as CSV.
    Report {
        #[arg(required = true)]
        logs: Vec<PathBuf>,
    },
    /// Evaluate the convergence bound for constants in a TOML file.
    Theory { inputs: PathBuf },
}

enum Failure {
    Config(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config { .. } => Failure::Config(e.to_string()),
            e => Failure::Runtime(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.quiet { "error" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs"))
}

fn load(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = seed {
        config.seed = seed;
        config.name = config.name.map(|n| format!("{n}_s{seed}"));
    }
    Ok(config)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let options = RunOptions {
        threads: cli.threads.max(1),
        theory: true,
    };
    match &cli.command {
        Command::Run { config } => {
            let config = load(config, cli.seed)?;
            let log = harness::run_experiment_with(&config, &options)?;
            let path = out_dir(cli).join(format!("{}.jsonl", config.label()));
            harness::write_log(&log, &path)?;
            if !cli.quiet {
                if let Some(s) = &log.summary {
                    println!(
                        "{}: A_ini={:.4} A_att={:.4} I={:.4}",
                        config.label(),
                        s.a_ini,
                        s.a_att,
                        s.negative_impact
                    );
                    if let Some(text) = &s.theory {
                        print!("{text}");
                    }
                }
                println!("log written to {}", path.display());
            }
            Ok(())
        }
        Command::Sweep { config_dir } => {
            let mut paths: Vec<PathBuf> = std::fs::read_dir(config_dir)
                .map_err(|e| Failure::Config(format!("{}: {e}", config_dir.display())))?
                .filter_map(|entry| entry.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "toml"))
                .collect();
            paths.sort();
            let configs = paths.iter().map(|p| load(p, cli.seed)).collect::<Result<Vec<_>, _>>()?;
            let result = harness::sweep(&configs, &options)?;
            let dir = out_dir(cli);
            result.write(&dir)?;
            let failures: Vec<_> = result.failures().collect();
            for (label, e) in &failures {
                eprintln!("{label}: {e}");
            }
            if !cli.quiet {
                print!("{}", harness::comparison_table(result.logs()));
            }
            if failures.is_empty() {
                Ok(())
            } else {
                Err(Failure::Runtime(format!(
                    "{} of {} runs failed",
                    failures.len(),
                    configs.len()
                )))
            }
        }
        Command::Report { logs } => {
            let loaded = logs
                .iter()
                .map(|p| harness::read_log(p).map(|l| l.log))
                .collect::<Result<Vec<_>, _>>()?;
            print!("{}", harness::runs_table(&loaded));
            println!();
            print!("{}", harness::comparison_table(&loaded));
            Ok(())
        }
        Command::Theory { inputs } => {
            let text =
                std::fs::read_to_string(inputs).map_err(|e| Failure::Config(format!("{}: {e}", inputs.display())))?;
            let inputs: TheoryInputs =
                toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", inputs.display())))?;
            let report = theory::report(&inputs).map_err(|e| Failure::Config(e.to_string()))?;
            if !cli.quiet {
                print!("{report}");
            }
            Ok(())
        }
    }
}
