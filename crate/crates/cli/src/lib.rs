//! Command-line front end: config loading, the six subcommands, and report
//! writing.

pub mod commands;
pub mod config;
pub mod error;

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

pub use commands::{execute, Command, Output};
pub use config::{ExperimentConfig, Overrides};
pub use error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "poisson-ident",
    version,
    about = "Secure identification over the Poisson wiretap channel"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Capacity of the main channel under the peak constraint.
    Capacity(CommonArgs),
    /// Secrecy capacity and the identification capacity verdict.
    Secrecy(CommonArgs),
    /// Monte Carlo error rates of the identification scheme.
    Idsim(CommonArgs),
    /// Exact leakage of small wiretap codes.
    Leakage(CommonArgs),
    /// Grid over eavesdropper dark current, peak and block length.
    Sweep(CommonArgs),
    /// Growth of the identity count with block length.
    Scaling(CommonArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    /// TOML experiment file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub trials: Option<u64>,
    #[arg(long)]
    pub lambda_b: Option<f64>,
    #[arg(long)]
    pub lambda_e: Option<f64>,
    #[arg(long)]
    pub peak: Option<f64>,
    #[arg(long)]
    pub grid_points: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    #[arg(long)]
    pub cap: Option<u64>,
}

impl CliCommand {
    pub fn split(&self) -> (Command, &CommonArgs) {
        match self {
            CliCommand::Capacity(a) => (Command::Capacity, a),
            CliCommand::Secrecy(a) => (Command::Secrecy, a),
            CliCommand::Idsim(a) => (Command::Idsim, a),
            CliCommand::Leakage(a) => (Command::Leakage, a),
            CliCommand::Sweep(a) => (Command::Sweep, a),
            CliCommand::Scaling(a) => (Command::Scaling, a),
        }
    }
}

impl CommonArgs {
    pub fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            trials: self.trials,
            lambda_b: self.lambda_b,
            lambda_e: self.lambda_e,
            peak: self.peak,
            grid_points: self.grid_points,
            n: self.n,
            epsilon: self.epsilon,
            cap: self.cap,
        }
    }

    /// File config (or defaults) with the flags applied.
    pub fn resolve(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        cfg.apply(&self.overrides());
        Ok(cfg)
    }
}

pub fn write_output(dir: &Path, out: &Output) -> Result<(), CliError> {
    std::fs::create_dir_all(dir)?;
    for (name, bytes) in &out.files {
        std::fs::write(dir.join(name), bytes)?;
    }
    Ok(())
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let (cmd, args) = cli.command.split();
    let cfg = match args.resolve() {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let dir = cfg.out.clone().unwrap_or_else(|| PathBuf::from("."));
    let (out, failure) = match execute(cmd, &cfg) {
        Ok(out) => (Some(out), None),
        Err((e, partial)) => (partial, Some(e)),
    };
    if let Some(out) = &out {
        if let Err(e) = write_output(&dir, out) {
            eprintln!("error: {e}");
            return e.exit_code();
        }
        for (name, _) in &out.files {
            log::info!("wrote {}", dir.join(name).display());
        }
    }
    match failure {
        Some(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
        None => {
            let out = out.expect("output on success");
            println!("{}", out.summary);
            out.exit_code
        }
    }
}
