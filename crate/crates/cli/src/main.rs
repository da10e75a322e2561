use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use sivsaw::fitting::Lineshape;
use sivsaw::io::{self, ExperimentSpec};
use sivsaw::Error;

/// Simulates acoustically driven SiV spin experiments from config files.
#[derive(Parser)]
#[command(name = "simulate", version)]
struct Cli {
    /// Log progress; repeat for debug output including compiled schedules.
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its results.
    Run {
        config: PathBuf,
        /// Lineshape family for the ODAR fit; overrides the config.
        #[arg(long, value_enum)]
        lineshape: Option<Shape>,
    },
    /// Check a config without running it.
    Validate { config: PathBuf },
    /// Plot a result JSON file to an SVG (with a sidecar CSV).
    Plot { result: PathBuf, out: PathBuf },
}

#[derive(Clone, Copy, ValueEnum)]
enum Shape {
    Gaussian,
    Lorentzian,
    SincSquared,
}

impl From<Shape> for Lineshape {
    fn from(s: Shape) -> Self {
        match s {
            Shape::Gaussian => Lineshape::Gaussian,
            Shape::Lorentzian => Lineshape::Lorentzian,
            Shape::SincSquared => Lineshape::SincSquared,
        }
    }
}

fn error_record(e: &Error) -> String {
    serde_json::json!({
        "error": e.kind(),
        "origin": e.origin(),
        "message": e.to_string(),
    })
    .to_string()
}

fn exit_code(e: &Error) -> ExitCode {
    match e {
        Error::Config { .. } => ExitCode::from(2),
        _ => ExitCode::from(1),
    }
}

fn run(config: &Path, lineshape: Option<Shape>, verbose: u8) -> Result<(), Error> {
    let mut cfg = io::load_config(config)?;
    if let (Some(shape), ExperimentSpec::Odar { lineshape: l, .. }) = (lineshape, &mut cfg.experiment) {
        *l = shape.into();
    }
    if verbose >= 2 {
        if let Some(schedule) = io::preview_schedule(&cfg)? {
            log::debug!("compiled schedule of the first sweep point:\n{schedule}");
        }
    }
    let outcome = io::run_loaded(&cfg, config)?;
    for f in &outcome.files {
        log::info!("wrote {}", f.display());
    }
    println!("{}", outcome.summary);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .format_timestamp(None)
        .init();

    match cli.command {
        Command::Run { config, lineshape } => match run(&config, lineshape, cli.verbose) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("{}", error_record(&e));
                exit_code(&e)
            }
        },
        Command::Validate { config } => {
            let report = io::validate(&config);
            for w in &report.warnings {
                println!("warning: {w}");
            }
            for e in &report.errors {
                println!("error: {e}");
            }
            if report.is_ok() {
                println!("{}: ok ({} warnings)", config.display(), report.warnings.len());
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Command::Plot { result, out } => {
            match io::read_result(&result).and_then(|r| io::plot_result(&r, &out)) {
                Ok(()) => {
                    println!("{}", out.display());
                    ExitCode::SUCCESS
                }
                Err(e) => {
                    eprintln!("{}", error_record(&e));
                    exit_code(&e)
                }
            }
        }
    }
}
