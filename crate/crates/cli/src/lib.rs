//! Command-line front end: argument parsing, input validation and output.

use std::ffi::OsString;
use std::fs;
use std::io::Write;

use clap::error::ErrorKind;
use clap::Parser;

pub mod args;
pub mod commands;
pub mod inputs;

use args::Cli;
use commands::CliError;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NOT_CONVERGED: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

/// Environment variable capping the worker thread count.
pub const THREADS_VAR: &str = "EQUIGAME_THREADS";

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => return Err(format!("{THREADS_VAR}: expected a positive integer, got {raw:?}")),
    };
    #[cfg(feature = "parallel")]
    {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn emit(cli: &Cli, text: &str) -> Result<(), String> {
    match &cli.out {
        Some(path) => fs::write(path, text).map_err(|e| format!("{}: cannot write: {e}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes()).and_then(|_| out.flush()).map_err(|e| format!("stdout: {e}"))
        }
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return EXIT_INVALID;
    }
    let diagnostics = inputs::validate_inputs(&cli);
    if !diagnostics.is_empty() {
        for d in &diagnostics {
            eprintln!("error: {d}");
        }
        return EXIT_INVALID;
    }
    match commands::run(&cli) {
        Ok(out) => {
            if let Err(msg) = emit(&cli, &out.text) {
                eprintln!("error: {msg}");
                return EXIT_INVALID;
            }
            if out.converged {
                EXIT_OK
            } else {
                eprintln!("warning: solver did not converge");
                EXIT_NOT_CONVERGED
            }
        }
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            EXIT_USAGE
        }
        Err(CliError::Invalid(ds)) => {
            for d in &ds {
                eprintln!("error: {d}");
            }
            EXIT_INVALID
        }
        Err(CliError::Failed(msg)) => {
            eprintln!("error: {msg}");
            EXIT_INVALID
        }
    }
}
