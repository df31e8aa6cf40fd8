//! `impobs`: certify, design, simulate and reproduce impulsive observer runs.
//!
//! Exit codes: 0 success, 1 infeasible design or failed check, 2 config or
//! usage error.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use impobs_core::SigmaVariant;

#[derive(Debug, Parser)]
#[command(
    name = "impobs",
    version,
    about = "Impulsive dissipative observer toolkit"
)]
struct Cli {
    /// Run configuration: a TOML file or the name of a bundled scenario.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<String>,
    /// Number of seed offsets to run (simulate, reproduce).
    #[arg(long, global = true, value_name = "N", value_parser = clap::value_parser!(u64).range(1..))]
    seeds: Option<u64>,
    /// Output directory; defaults to the config's output.dir, then ".".
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Coupling coefficient of the majorant flow.
    #[arg(long, global = true, value_enum)]
    sigma_variant: Option<VariantArg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Certificate report: kappa_n, varpi_o, margins and falsification.
    Certify,
    /// Design constants, sampling window and feasibility.
    Design,
    /// Simulate plant and observer, write CSV traces and check ISS.
    Simulate,
    /// Emit the data behind one of the benchmark figures (fig3 to fig6).
    Reproduce {
        #[arg(value_name = "FIGURE")]
        figure: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum VariantArg {
    Eq15,
    Factor2,
}

impl From<VariantArg> for SigmaVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::Eq15 => SigmaVariant::Eq15,
            VariantArg::Factor2 => SigmaVariant::Factor2,
        }
    }
}

pub struct Flags {
    pub config: Option<String>,
    pub seeds: u64,
    pub out: Option<PathBuf>,
    pub sigma_variant: Option<SigmaVariant>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let flags = Flags {
        config: cli.config,
        seeds: cli.seeds.unwrap_or(1),
        out: cli.out,
        sigma_variant: cli.sigma_variant.map(Into::into),
    };
    let result = match cli.command {
        Command::Certify => commands::certify(&flags),
        Command::Design => commands::design(&flags),
        Command::Simulate => commands::simulate(&flags),
        Command::Reproduce { figure } => commands::reproduce(&flags, &figure),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
