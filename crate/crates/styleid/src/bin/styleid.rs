//! Thin binary wrapper: logging setup, dispatch, exit-code mapping.
//!
//! Exit codes: 0 success, 2 usage error, 3 i/o or format error,
//! 4 numerical failure.

use std::process::ExitCode;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match styleid::cli::run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
