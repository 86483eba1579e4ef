use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lme_core::scenario::{self, Scenario, ScenarioConfig};
use lme_core::Error;

#[derive(Parser)]
#[command(name = "lme-sim", version, about = "Run local master equation scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write CSVs plus manifest.json.
    Run {
        config: PathBuf,
        /// Output directory, overrides `output_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// RNG seed, overrides `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads for sweeps and trajectory sampling.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Check a config and report every violation.
    Validate { config: PathBuf },
    /// Print the available scenarios.
    ListScenarios,
}

fn load(path: &PathBuf) -> Result<ScenarioConfig, Error> {
    let text = std::fs::read_to_string(path)?;
    scenario::parse_config(&text)
}

fn report(err: &Error) -> ExitCode {
    eprintln!("error: {err}");
    match err {
        Error::Config(_) => ExitCode::from(2),
        _ => ExitCode::FAILURE,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ListScenarios => {
            for s in Scenario::ALL {
                println!("{:<20} {}", s.name(), s.description());
            }
            ExitCode::SUCCESS
        }
        Command::Validate { config } => match load(&config) {
            Ok(cfg) => {
                println!("ok: {} ({} qubits)", cfg.scenario, cfg.n_qubits());
                ExitCode::SUCCESS
            }
            Err(e) => report(&e),
        },
        Command::Run { config, out, seed, threads } => {
            let mut cfg = match load(&config) {
                Ok(c) => c,
                Err(e) => return report(&e),
            };
            if let Some(dir) = out {
                cfg.output_dir = dir;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(n) = threads {
                if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
                    eprintln!("error: cannot configure {n} threads: {e}");
                    return ExitCode::FAILURE;
                }
            }
            match scenario::run(&cfg) {
                Ok(m) => {
                    for f in &m.files {
                        println!("{}", cfg.output_dir.join(&f.name).display());
                    }
                    println!("{}", cfg.output_dir.join("manifest.json").display());
                    eprintln!("{} finished in {:.2} s", m.scenario, m.wall_time_s);
                    ExitCode::SUCCESS
                }
                Err(e) => report(&e),
            }
        }
    }
}
