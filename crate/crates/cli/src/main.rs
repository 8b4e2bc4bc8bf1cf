use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qkl_cli::config::ThetaSpec;
use qkl_cli::{export, exit, run, Failure, RunConfig, Stage};

/// Commutator-kernel Karhunen-Loeve spectra, coefficient covariances and
/// quadratic-exponential functionals for one-mode open quantum oscillators.
#[derive(Debug, Parser)]
#[command(name = "qkl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `output.dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Risk sensitivities: `a,b,c` or `start:stop:count[:log]`.
    #[arg(long, global = true, allow_hyphen_values = true)]
    theta: Option<String>,

    /// Truncation order (overrides `order`).
    #[arg(long, global = true)]
    n: Option<usize>,

    /// Log progress to stderr (repeat for more detail).
    #[arg(long, short, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Eigenvalues and eigenfunctions of the covariance operator.
    Spectrum,
    /// Invariant covariance and the QKL coefficient covariance blocks.
    Covariance,
    /// Truncated functional at each theta, with the Schur series.
    Qef,
    /// Functional over theta for every truncation order up to N.
    Sweep,
    /// Independent oracle checks; exits with status 4 if any fails.
    Verify,
}

fn load(cli: &Cli) -> Result<RunConfig, Failure> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| Failure::Config("--config <path> is required".into()))?;
    let mut cfg = RunConfig::load(path)?;
    if let Some(n) = cli.n {
        cfg.order = n;
    }
    if let Some(t) = &cli.theta {
        cfg.theta = Some(ThetaSpec::from_arg(t)?);
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn execute(cli: &Cli) -> Result<(), Failure> {
    let cfg = load(cli)?;
    let stage = match cli.command {
        Command::Spectrum => Stage::Spectrum,
        Command::Covariance => Stage::Covariance,
        Command::Qef => Stage::Qef,
        Command::Sweep => Stage::Sweep,
        Command::Verify => Stage::Verify,
    };
    let outcome = run(stage, &cfg)?;
    export::write_all(&cfg.output.dir, &outcome.artifacts)?;
    for line in &outcome.summary {
        println!("{line}");
    }
    for a in &outcome.artifacts {
        println!("wrote {}", cfg.output.dir.join(&a.name).display());
    }
    if outcome.failed_checks > 0 {
        return Err(Failure::Verification {
            failed: outcome.failed_checks,
        });
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new().filter_level(level).parse_default_env().init();
    match execute(&cli) {
        Ok(()) => ExitCode::from(exit::SUCCESS as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
