use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use padic_cells::cli::{self, IntegrateOptions, Mode, Outcome, Settings};
use padic_cells::Error;

/// Cell decomposition and exact integration of p-adic constructible functions.
///
/// Exit codes: 0 success, 1 input or schema error (or an unsupported
/// problem), 2 precision exhausted, 3 a verification failed.
#[derive(Parser)]
#[command(name = "padic-cells", version)]
struct Args {
    /// The prime; overrides "p" in problem files.
    #[arg(long, global = true)]
    p: Option<u64>,
    /// Digits for decomposition and Hensel lifting.
    #[arg(long, global = true, default_value_t = 8)]
    precision: u32,
    /// Residue classes the oracle may enumerate before sampling.
    #[arg(long, global = true, env = "PADIC_CELLS_BUDGET")]
    budget: Option<u64>,
    /// Compact JSON output (the default).
    #[arg(long, global = true, conflicts_with = "pretty")]
    json: bool,
    /// Indented JSON output.
    #[arg(long, global = true)]
    pretty: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cells and prepared terms of |f| for a one-variable polynomial.
    Decompose {
        path: PathBuf,
        /// Write the JSON here instead of standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Check every residue class mod p^precision.
        #[arg(long)]
        verify: bool,
    },
    /// Integrate out the integration variables of a problem.
    Integrate {
        path: PathBuf,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<Mode>,
        /// Base point as comma-separated rationals; repeatable.
        #[arg(long = "point", allow_hyphen_values = true)]
        points: Vec<String>,
        /// Compare with the residue-class oracle at this many digits.
        #[arg(long = "verify-N", alias = "verify-n")]
        verify_n: Option<u32>,
    },
    /// Igusa's local zeta function of a polynomial in x0.
    Zeta {
        f: String,
        /// Compare this many Poincaré series coefficients with root counts.
        #[arg(long)]
        check_poincare: Option<usize>,
    },
    /// Measure of the union of a problem's cells.
    Measure {
        path: PathBuf,
        #[arg(long = "verify-N", alias = "verify-n")]
        verify_n: Option<u32>,
    },
    /// Compare the engine's value with the oracle.
    Verify {
        path: PathBuf,
        /// Oracle digits.
        #[arg(short = 'N', long = "digits", default_value_t = 6)]
        digits: u32,
    },
    /// Syntax check of a constructible expression.
    Parse { text: String },
}

fn parse_mode(s: &str) -> Result<Mode, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn read(path: &Path) -> Result<String, Error> {
    Ok(std::fs::read_to_string(path)?)
}

fn run(args: &Args) -> Result<(Outcome, Option<PathBuf>), Error> {
    let settings = Settings {
        p: args.p,
        precision: args.precision,
        budget: args.budget,
    };
    Ok(match &args.command {
        Command::Decompose { path, out, verify } => {
            (cli::cmd_decompose(&read(path)?, &settings, *verify)?, out.clone())
        }
        Command::Integrate {
            path,
            mode,
            points,
            verify_n,
        } => {
            let points = if points.is_empty() {
                None
            } else {
                Some(points.iter().map(|s| cli::parse_point(s)).collect::<Result<_, _>>()?)
            };
            let opts = IntegrateOptions {
                mode: *mode,
                points,
                verify_digits: *verify_n,
            };
            (cli::cmd_integrate(&read(path)?, &settings, &opts)?, None)
        }
        Command::Zeta { f, check_poincare } => (cli::cmd_zeta(f, &settings, *check_poincare)?, None),
        Command::Measure { path, verify_n } => (cli::cmd_measure(&read(path)?, &settings, *verify_n)?, None),
        Command::Verify { path, digits } => (cli::cmd_verify(&read(path)?, &settings, *digits)?, None),
        Command::Parse { text } => (cli::cmd_parse(text)?, None),
    })
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok((outcome, out)) => {
            let text = if args.pretty {
                serde_json::to_string_pretty(&outcome.report)
            } else {
                serde_json::to_string(&outcome.report)
            }
            .expect("JSON values serialize");
            match out {
                Some(path) => {
                    if let Err(e) = std::fs::write(&path, text + "\n") {
                        eprintln!("error: {}: {e}", path.display());
                        return ExitCode::from(1);
                    }
                }
                None => {
                    // a closed pipe downstream is not our failure
                    let _ = writeln!(std::io::stdout(), "{text}");
                }
            }
            if outcome.pass {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(3)
            }
        }
        Err(e) => {
            let source = match &args.command {
                Command::Parse { text } => Some(text.as_str()),
                Command::Zeta { f, .. } => Some(f.as_str()),
                _ => None,
            };
            eprintln!("{}", cli::render_error(&e, source));
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
