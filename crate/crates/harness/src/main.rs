use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use invmeta::stream::RandomStream;
use invmeta_harness::{emit_csv, emit_curves, optimal_oracle, run_experiment, ExperimentConfig, RunOptions};

#[derive(Parser)]
#[command(name = "invmeta", version, about = "Run inventory-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every policy and horizon and write the summary CSV.
    Run {
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-period regret curves next to the output.
        #[arg(long)]
        curves: bool,
        #[arg(long)]
        jobs: Option<usize>,
        /// Overrides the seed in the config.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Check the config and print admissibility warnings.
    Validate { config: PathBuf },
    /// Print the benchmark minimizer and its cost.
    Oracle {
        config: PathBuf,
        #[arg(long)]
        jobs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn load(path: &PathBuf, seed: Option<u64>) -> invmeta_harness::Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn run(cli: Cli) -> invmeta_harness::Result<ExitCode> {
    match cli.command {
        Command::Run { config, out, curves, jobs, seed } => {
            let cfg = load(&config, seed)?;
            let out = out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("results.csv"));
            let result = run_experiment(&cfg, &RunOptions { jobs, curves })?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            eprintln!("oracle: y* = {}, C* = {:.6}", fmt_vec(&result.oracle.target), result.oracle.cost);
            emit_csv(&result, &out)?;
            println!("wrote {}", out.display());
            if curves {
                for p in emit_curves(&result, &out)? {
                    println!("wrote {}", p.display());
                }
            }
            for f in &result.failures {
                eprintln!("replication {} of {} (T={}) failed: {}", f.replication, f.policy, f.horizon, f.message);
            }
            Ok(if result.failures.is_empty() { ExitCode::SUCCESS } else { ExitCode::from(2) })
        }
        Command::Validate { config } => {
            let cfg = load(&config, None)?;
            let (_, warnings) = cfg.validate()?;
            for w in &warnings {
                println!("warning: {w}");
            }
            println!("ok: {} policies, {} horizons, {} replications", cfg.policy.len(), cfg.horizons.len(), cfg.replications);
            Ok(ExitCode::SUCCESS)
        }
        Command::Oracle { config, jobs, seed } => {
            let cfg = load(&config, seed)?;
            let (instance, _) = cfg.validate()?;
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(jobs.unwrap_or(0))
                .build()
                .map_err(|e| invmeta_harness::HarnessError::Config(e.to_string()))?;
            let stream = RandomStream::new(cfg.seed, u64::MAX).fork(0x0AC1E);
            let o = pool.install(|| optimal_oracle(&instance, &cfg.oracle, &stream))?;
            println!("y* = {}", fmt_vec(&o.target));
            if o.decision != o.target {
                println!("order-up-to = {}", fmt_vec(&o.decision));
            }
            println!("C* = {:.6}", o.cost);
            if !o.converged {
                eprintln!("warning: projected-gradient residual {:.3e} above tolerance", o.residual);
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    env_logger::init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
