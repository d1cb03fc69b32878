//! `detector-forge`: build detectors and certificates from a JSON problem file.

mod config;
mod report;
mod tasks;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use crate::tasks::{RunError, Settings};

#[derive(Parser, Debug)]
#[command(name = "detector-forge", version, about = "Minimum-risk detectors for composite hypotheses")]
struct Args {
    /// Problem description (JSON).
    #[arg(long, required_unless_present = "print_schema")]
    config: Option<PathBuf>,
    /// Report path; `.txt` summary and `.csv` tables are written beside it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the solver tolerance.
    #[arg(long)]
    tol: Option<f64>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Check the config and exit.
    #[arg(long)]
    validate: bool,
    /// Print the config JSON Schema and exit.
    #[arg(long)]
    print_schema: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DETECTOR_FORGE_LOG", "warn")).init();
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(args: &Args) -> Result<(), RunError> {
    if args.print_schema {
        print!("{}", config::schema());
        return Ok(());
    }
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(config::ConfigError::new("--threads", "must be positive").into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| RunError::Io(format!("thread pool: {e}")))?;
    }
    let path = args.config.as_deref().unwrap_or_else(|| std::path::Path::new(""));
    let text = std::fs::read_to_string(path)
        .map_err(|e| config::ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
    let cfg = config::parse(&text)?;
    let options = config::solver_options(&cfg.solver, args.tol)?;
    let settings = Settings { seed: args.seed.unwrap_or(cfg.seed), options, dry: args.validate };
    let report = tasks::run(&cfg, &settings)?;
    if args.validate {
        println!("config ok");
        return Ok(());
    }
    match &args.out {
        Some(out) => {
            let files = report.write(out).map_err(|e| RunError::Io(format!("cannot write {}: {e}", out.display())))?;
            print!("{}", report.summary());
            for f in files {
                log::info!("wrote {}", f.display());
            }
        }
        None => print!("{}", report.json_text()),
    }
    Ok(())
}
