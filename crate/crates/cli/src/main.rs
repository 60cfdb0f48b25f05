//! `rounda`: check, generate, sample and benchmark roundoff error certificates.

mod commands;
mod style;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rounda::checker::{CheckDomain, RangeDomain};
use rounda::numeric::Precision;
use rounda::oracle::Strategy;

use crate::style::{ColorChoice, Style};

/// Process exit status; the final `PASS`/`FAIL` line agrees with it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Status {
    Pass = 0,
    Reject = 1,
    Usage = 2,
    Internal = 3,
}

#[derive(Parser, Debug)]
#[command(name = "rounda", version, about = "Check and generate roundoff error certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate certificates.
    Check {
        #[arg(required = true)]
        files: Vec<PathBuf>,
        #[arg(long, value_enum, default_value_t = DomainArg::Portfolio)]
        domain: DomainArg,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        report: ReportFormat,
    },
    /// Analyze a program and write a certificate for it.
    Generate {
        input: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long, value_enum, default_value_t = RangeArg::Ia)]
        domain: RangeArg,
        /// Assign fixed-point formats of this word length to every node.
        #[arg(long, value_name = "WORD", conflicts_with = "precision")]
        fixed: Option<u32>,
        /// Retype every variable, constant and operation uniformly.
        #[arg(long, value_enum)]
        precision: Option<FloatArg>,
        /// Treat program inputs as exactly representable.
        #[arg(long)]
        exact_inputs: bool,
    },
    /// Compare a certificate's error bound against sampled executions.
    Sample {
        file: PathBuf,
        #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
        n: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = StrategyArg::EndpointsPlusUniform)]
        strategy: StrategyArg,
    },
    /// Generate and check every certificate in a directory, timing both.
    Bench {
        dir: PathBuf,
        #[arg(long, value_enum, default_value_t = RangeArg::Ia)]
        domain: RangeArg,
        /// Write the CSV table here instead of standard output.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum DomainArg {
    Ia,
    Aa,
    Portfolio,
}

impl From<DomainArg> for CheckDomain {
    fn from(d: DomainArg) -> Self {
        match d {
            DomainArg::Ia => CheckDomain::Ia,
            DomainArg::Aa => CheckDomain::Aa,
            DomainArg::Portfolio => CheckDomain::Portfolio,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum RangeArg {
    Ia,
    Aa,
}

impl From<RangeArg> for RangeDomain {
    fn from(d: RangeArg) -> Self {
        match d {
            RangeArg::Ia => RangeDomain::Ia,
            RangeArg::Aa => RangeDomain::Aa,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FloatArg {
    F16,
    F32,
    F64,
}

impl From<FloatArg> for Precision {
    fn from(p: FloatArg) -> Self {
        match p {
            FloatArg::F16 => Precision::F16,
            FloatArg::F32 => Precision::F32,
            FloatArg::F64 => Precision::F64,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum StrategyArg {
    Uniform,
    EndpointsPlusUniform,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Uniform => Strategy::UniformDyadic,
            StrategyArg::EndpointsPlusUniform => Strategy::EndpointsPlusUniform,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Text,
    Json,
}

fn run(cli: Cli, style: Style) -> Status {
    match cli.command {
        Command::Check { files, domain, report } => commands::check(&files, domain.into(), report, style),
        Command::Generate { input, output, domain, fixed, precision, exact_inputs } => {
            let opts = commands::GenerateOptions {
                domain: domain.into(),
                fixed,
                precision: precision.map(Into::into),
                exact_inputs,
            };
            commands::generate(&input, &output, &opts)
        }
        Command::Sample { file, n, seed, strategy } => {
            let cfg = rounda::oracle::SampleConfig { count: n as usize, seed, strategy: strategy.into() };
            commands::sample(&file, &cfg)
        }
        Command::Bench { dir, domain, csv } => commands::bench(&dir, domain.into(), csv.as_deref()),
    }
}

fn finish(status: Status, style: Style) -> ExitCode {
    let line = if status == Status::Pass { style.pass("PASS") } else { style.fail("FAIL") };
    println!("{line}");
    ExitCode::from(status as u8)
}

fn main() -> ExitCode {
    let style = match ColorChoice::from_env() {
        Ok(choice) => Style::new(choice),
        Err(msg) => {
            eprintln!("error: {msg}");
            return finish(Status::Usage, Style::new(ColorChoice::Never));
        }
    };
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) if !err.use_stderr() => {
            // --help and --version
            let _ = err.print();
            return ExitCode::SUCCESS;
        }
        Err(err) => {
            let _ = err.print();
            return finish(Status::Usage, style);
        }
    };
    let status = std::panic::catch_unwind(|| run(cli, style)).unwrap_or(Status::Internal);
    finish(status, style)
}
