use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rayon::prelude::*;

use trustfed::registry::FederationRegistry;
use trustfed::scenario::{self, RunOptions, RunReport, ScenarioError};

#[derive(Parser)]
#[command(name = "trustfed", version, about = "Deterministic trust federation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run bundled scenarios by name, scenario files by path, or `all`.
    Run {
        #[arg(required = true)]
        scenarios: Vec<String>,
        /// Registry file replacing the bundled one.
        #[arg(long)]
        registry: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Reject schemes whose recognition is not yet mandatory.
        #[arg(long)]
        strict_recognition: bool,
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long)]
        log: Option<PathBuf>,
        /// Scenarios run in parallel, each with its own state.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Parse a registry file and print lint warnings.
    ValidateRegistry { file: PathBuf },
    ListScenarios,
}

fn config_error(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(2)
}

fn load_registry(path: Option<&PathBuf>) -> Result<FederationRegistry, String> {
    match path {
        None => Ok(FederationRegistry::bundled()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            FederationRegistry::load(text.as_bytes()).map_err(|e| format!("{}: {e}", p.display()))
        }
    }
}

fn scenario_text(arg: &str) -> Result<String, String> {
    if let Some(text) = scenario::bundled(arg) {
        return Ok(text.to_string());
    }
    fs::read_to_string(arg).map_err(|e| format!("{arg}: not a bundled scenario and not readable: {e}"))
}

fn run_one(arg: &str, registry: &FederationRegistry, opts: &RunOptions) -> Result<RunReport, String> {
    let text = scenario_text(arg)?;
    let sc = scenario::parse_scenario(&text).map_err(|e: ScenarioError| format!("{arg}: {e}"))?;
    scenario::run(&sc, registry, opts).map_err(|e| format!("{arg}: {e}"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListScenarios => {
            for name in scenario::bundled_names() {
                println!("{name}");
            }
            ExitCode::SUCCESS
        }
        Command::ValidateRegistry { file } => match load_registry(Some(&file)) {
            Err(e) => config_error(e),
            Ok(reg) => {
                for lint in reg.lint() {
                    println!("{lint}");
                }
                println!("{}: {} schemes ok", file.display(), reg.schemes().count());
                ExitCode::SUCCESS
            }
        },
        Command::Run {
            scenarios,
            registry,
            seed,
            strict_recognition,
            report,
            log,
            jobs,
        } => {
            let registry = match load_registry(registry.as_ref()) {
                Ok(r) => r,
                Err(e) => return config_error(e),
            };
            let names: Vec<String> = if scenarios.iter().any(|s| s == "all") {
                scenario::bundled_names().map(str::to_string).collect()
            } else {
                scenarios
            };
            let opts = RunOptions {
                seed,
                strict_recognition,
            };
            let pool = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
                Ok(p) => p,
                Err(e) => return config_error(e),
            };
            let results: Vec<Result<RunReport, String>> =
                pool.install(|| names.par_iter().map(|n| run_one(n, &registry, &opts)).collect());
            let mut reports = Vec::new();
            for r in results {
                match r {
                    Ok(rep) => reports.push(rep),
                    Err(e) => return config_error(e),
                }
            }
            let rendered: String = reports.iter().map(RunReport::render).collect();
            print!("{rendered}");
            if let Some(path) = report {
                if let Err(e) = fs::write(&path, &rendered) {
                    return config_error(format!("{}: {e}", path.display()));
                }
            }
            if let Some(path) = log {
                let logs: String = reports.iter().map(|r| r.log.render()).collect();
                if let Err(e) = fs::write(&path, logs) {
                    return config_error(format!("{}: {e}", path.display()));
                }
            }
            if reports.iter().all(RunReport::passed) {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
    }
}
