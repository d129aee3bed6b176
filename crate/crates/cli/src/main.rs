use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ltransport_cli::{exit, render, run_batch, run_file, write_outputs, Command, Format, RunOptions};

#[derive(Parser)]
#[command(
    name = "ltransport",
    version,
    about = "Linear transports along paths: integrate, verify, report"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file (TOML, or a JSON scenario echo).
    #[arg(long)]
    scenario: PathBuf,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// Write reports into this directory instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Text)]
    format: FormatArg,
    /// Override the scenario's random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Include wall time in the report.
    #[arg(long)]
    timing: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Text,
    Tabular,
}

#[derive(Subcommand)]
enum Sub {
    /// Report H(t, s) at the given or configured parameter pairs.
    Transport {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        s: Option<f64>,
        #[arg(long, allow_negative_numbers = true)]
        t: Option<f64>,
        /// Re-integrate at a tenth of the step and report the discrepancy.
        #[arg(long)]
        oracle: bool,
    },
    /// Verify transport axioms, integration accuracy and derivation properties.
    Check {
        #[command(flatten)]
        common: Common,
    },
    /// Transport around the scenario's closed path.
    Holonomy {
        #[command(flatten)]
        common: Common,
        /// Traverse the loop backwards.
        #[arg(long)]
        reverse: bool,
    },
    /// Build the frame in which the transport is the identity.
    Frame {
        #[command(flatten)]
        common: Common,
        #[arg(long, allow_negative_numbers = true)]
        s0: Option<f64>,
    },
    /// Compare the coefficient form of the derivation with its limit definition.
    Derive {
        #[command(flatten)]
        common: Common,
    },
    /// Reconstruct the transport and extract its coefficients again.
    Roundtrip {
        #[command(flatten)]
        common: Common,
    },
    /// Run one subcommand over many scenarios in parallel.
    Batch {
        #[arg(long, value_enum)]
        command: BatchCommand,
        /// Scenario files.
        #[arg(required = true)]
        scenarios: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = FormatArg::Text)]
        format: FormatArg,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        timing: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum BatchCommand {
    Transport,
    Check,
    Holonomy,
    Frame,
    Derive,
    Roundtrip,
}

impl From<FormatArg> for Format {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Text => Format::Text,
            FormatArg::Tabular => Format::Tabular,
        }
    }
}

impl From<BatchCommand> for Command {
    fn from(c: BatchCommand) -> Self {
        match c {
            BatchCommand::Transport => Command::Transport {
                s: None,
                t: None,
                oracle: false,
            },
            BatchCommand::Check => Command::Check,
            BatchCommand::Holonomy => Command::Holonomy { reverse: false },
            BatchCommand::Frame => Command::Frame { s0: None },
            BatchCommand::Derive => Command::Derive,
            BatchCommand::Roundtrip => Command::Roundtrip,
        }
    }
}

fn single(common: Common, command: Command) -> u8 {
    let options = RunOptions {
        seed: common.output.seed,
        timing: common.output.timing,
        format: common.output.format.into(),
        out: common.output.out.clone(),
    };
    let report = match run_file(&common.scenario, &command, &options) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    match &options.out {
        Some(dir) => {
            let stem = format!("{}-{}", report.scenario.name, command.name());
            match write_outputs(&report, dir, &stem, options.format) {
                Ok(paths) => {
                    for p in paths {
                        eprintln!("wrote {}", p.display());
                    }
                }
                Err(e) => {
                    eprintln!("error: {e}");
                    return e.exit_code();
                }
            }
        }
        None => {
            let mut stdout = std::io::stdout().lock();
            if stdout.write_all(render(&report, options.format).as_bytes()).is_err() {
                return exit::INPUT;
            }
        }
    }
    for c in report.checks.iter().filter(|c| !c.pass) {
        eprintln!(
            "violation: {} = {:e} exceeds {:e}",
            c.name,
            c.value,
            c.bound.unwrap_or(f64::NAN)
        );
    }
    ltransport_cli::report_exit_code(&report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let code = match cli.command {
        Sub::Transport { common, s, t, oracle } => single(common, Command::Transport { s, t, oracle }),
        Sub::Check { common } => single(common, Command::Check),
        Sub::Holonomy { common, reverse } => single(common, Command::Holonomy { reverse }),
        Sub::Frame { common, s0 } => single(common, Command::Frame { s0 }),
        Sub::Derive { common } => single(common, Command::Derive),
        Sub::Roundtrip { common } => single(common, Command::Roundtrip),
        Sub::Batch {
            command,
            scenarios,
            out,
            format,
            seed,
            timing,
        } => {
            let options = RunOptions {
                seed,
                timing,
                format: format.into(),
                out: Some(out.clone()),
            };
            let items = run_batch(&scenarios, &command.into(), &options, &out);
            let mut code = exit::OK;
            for item in &items {
                match &item.outcome {
                    Ok((report, _)) => {
                        eprintln!("{}: {:?} -> {}.json", item.scenario.display(), report.status, item.stem)
                    }
                    Err(e) => eprintln!("{}: error: {e}", item.scenario.display()),
                }
                code = code.max(item.exit_code());
            }
            code
        }
    };
    ExitCode::from(code)
}
