use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Deserialize;

use cbwk::fairness::CourtEnvironment;
use cbwk::harness::{format_table, read_summary_json, run_to_dir, ExperimentConfig};
use cbwk::oracles::{estimate_opt, DualMinConfig};
use cbwk::{CbwkError, Environment};

#[derive(Parser)]
#[command(name = "cbwk", version, about = "Contextual bandits with knapsacks experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EnvName {
    Court,
}

#[derive(Subcommand)]
enum Command {
    /// Run a batch of seeded simulations and write series.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Number of seeds (overrides the config).
        #[arg(long)]
        seeds: Option<usize>,
        /// Base seed (overrides the config).
        #[arg(long)]
        seed: Option<u64>,
        /// Use 100 seeds.
        #[arg(long, conflicts_with = "seeds")]
        full: bool,
        /// Include warm-up rounds in the running averages.
        #[arg(long)]
        include_warmup: bool,
    },
    /// Estimate OPT and the optimal dual variables by dual minimization.
    Opt {
        #[arg(long, value_enum)]
        env: EnvName,
        #[arg(long)]
        tau: f64,
        /// TOML or JSON file with a `budget` array; defaults to the court budget.
        #[arg(long)]
        budget_file: Option<PathBuf>,
        /// Margin removed from the two spending components.
        #[arg(long, default_value_t = 0.0)]
        margin: f64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5000)]
        iters: usize,
    },
    /// Print the final-round table of every summary.json under a directory.
    Table {
        #[arg(long)]
        runs: PathBuf,
    },
    /// Run the invariant suite.
    Selftest,
}

#[derive(Deserialize)]
struct BudgetFile {
    budget: Vec<f64>,
}

fn read_budget(path: &Path) -> Result<Vec<f64>, CbwkError> {
    let text = std::fs::read_to_string(path).map_err(|source| CbwkError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let parsed: BudgetFile = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|source| CbwkError::Json {
            path: path.to_path_buf(),
            source,
        })?
    } else {
        toml::from_str(&text).map_err(|e| CbwkError::Config(format!("{}: {e}", path.display())))?
    };
    Ok(parsed.budget)
}

fn summaries_under(dir: &Path) -> Result<Vec<PathBuf>, CbwkError> {
    let mut found = Vec::new();
    let direct = dir.join("summary.json");
    if direct.is_file() {
        found.push(direct);
    }
    let entries = std::fs::read_dir(dir).map_err(|source| CbwkError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut subdirs: Vec<PathBuf> = entries.filter_map(|e| e.ok().map(|e| e.path())).filter(|p| p.is_dir()).collect();
    subdirs.sort();
    for sub in subdirs {
        let p = sub.join("summary.json");
        if p.is_file() {
            found.push(p);
        }
    }
    Ok(found)
}

fn execute(cmd: Command) -> Result<(), CbwkError> {
    match cmd {
        Command::Run {
            config,
            out,
            seeds,
            seed,
            full,
            include_warmup,
        } => {
            let mut cfg = ExperimentConfig::from_file(&config)?;
            if let Some(n) = seeds {
                cfg.run.seeds = n;
            }
            if full {
                cfg.run.seeds = 100;
            }
            if let Some(s) = seed {
                cfg.run.base_seed = s;
            }
            cfg.run.include_warmup |= include_warmup;
            cfg.validate()?;
            let batch = run_to_dir(cfg, &out)?;
            print!("{}", format_table(std::slice::from_ref(&batch.summary)));
            println!("wrote {}", out.display());
        }
        Command::Opt {
            env,
            tau,
            budget_file,
            margin,
            samples,
            reps,
            seed,
            iters,
        } => {
            let EnvName::Court = env;
            let court = CourtEnvironment::new(tau)?;
            let mut budget = match budget_file {
                Some(p) => read_budget(&p)?,
                None => court.budget().as_slice().to_vec(),
            };
            if budget.len() != court.cost_dim() {
                return Err(CbwkError::DimensionMismatch {
                    expected: court.cost_dim(),
                    actual: budget.len(),
                });
            }
            for b in budget.iter_mut().take(2) {
                *b -= margin;
            }
            let cfg = DualMinConfig {
                iters,
                ..DualMinConfig::default()
            };
            let est = estimate_opt(&court, &budget, samples, reps, seed, &cfg)?;
            println!("OPT = {:.4} ± {:.4} (2·SE over {} reps of {} contexts)", est.value, 2.0 * est.stderr, reps, samples);
            let lam: Vec<String> = est.lambda_star.as_slice().iter().map(|v| format!("{v:.4}")).collect();
            println!("lambda* = [{}]", lam.join(", "));
        }
        Command::Table { runs } => {
            let files = summaries_under(&runs)?;
            if files.is_empty() {
                return Err(CbwkError::Config(format!("no summary.json under {}", runs.display())));
            }
            let mut rows = Vec::new();
            for f in files {
                rows.extend(read_summary_json(&f)?.rows);
            }
            print!("{}", format_table(&rows));
        }
        Command::Selftest => {
            if !cbwk::selftest::run_and_report() {
                return Err(CbwkError::Config("selftest failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            // a missing or malformed config is a usage problem
            match e {
                CbwkError::Config(_) | CbwkError::Io { .. } if is_usage(&e) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}

fn is_usage(e: &CbwkError) -> bool {
    match e {
        CbwkError::Io { source, .. } => source.kind() == std::io::ErrorKind::NotFound,
        CbwkError::Config(msg) => msg != "selftest failed",
        _ => false,
    }
}
