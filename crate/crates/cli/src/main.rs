use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use vako_cli::suites::{model_catalog, run_suite, Suite, DEFAULT_SEED};
use vako_cli::{parse_scenario, run_scenario, CliError};

#[derive(Parser)]
#[command(name = "vako", version, about = "Nonholonomic, vakonomic and Chetaev dynamics of the skate")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one or more scenario files; independent scenarios run concurrently.
    Run {
        #[arg(long = "scenario", required = true)]
        scenarios: Vec<PathBuf>,
        #[arg(long, env = "VAKO_OUT_DIR", default_value = ".")]
        out_dir: PathBuf,
        /// Project an inadmissible initial velocity instead of rejecting it.
        #[arg(long)]
        project_velocity: bool,
    },
    /// Run a verification suite and print one JSON line per criterion.
    Verify {
        #[arg(long, default_value = "all")]
        suite: Suite,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// List the built-in models.
    ListModels,
}

fn run_one(path: &Path, out_dir: &Path, project: bool) -> Result<Vec<PathBuf>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let spec = parse_scenario(&text)?;
    Ok(run_scenario(spec, out_dir, project)?.files)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Run {
            scenarios,
            out_dir,
            project_velocity,
        } => {
            let results: Vec<_> = std::thread::scope(|scope| {
                let handles: Vec<_> = scenarios
                    .iter()
                    .map(|p| scope.spawn(|| run_one(p, &out_dir, project_velocity)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("scenario thread panicked")).collect()
            });
            let mut code = 0;
            for (path, result) in scenarios.iter().zip(results) {
                match result {
                    Ok(files) => {
                        for f in files {
                            println!("{}", f.display());
                        }
                    }
                    Err(e) => {
                        eprintln!("error: {}: {e}", path.display());
                        if code == 0 {
                            code = e.exit_code();
                        }
                    }
                }
            }
            ExitCode::from(code as u8)
        }
        Command::Verify { suite, seed } => {
            let results = run_suite(suite, seed);
            let mut failed = 0;
            for r in &results {
                println!("{}", serde_json::to_string(r).expect("criterion serializes"));
                failed += usize::from(!r.passed);
            }
            if failed > 0 {
                eprintln!("{failed} of {} criteria failed", results.len());
                ExitCode::FAILURE
            } else {
                ExitCode::SUCCESS
            }
        }
        Command::ListModels => {
            for m in model_catalog() {
                println!("{m}");
            }
            ExitCode::SUCCESS
        }
    }
}
