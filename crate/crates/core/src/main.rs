use std::io::Write;
use std::process::ExitCode;

use energy_orbit::cli::commands::EXIT_HYPOTHESIS;
use energy_orbit::cli::{run, OUT_DIR_ENV};

fn main() -> ExitCode {
    let env_out = std::env::var_os(OUT_DIR_ENV).filter(|v| !v.is_empty()).map(Into::into);
    let outcome = run(std::env::args_os(), env_out);
    let text = outcome.message.trim_end();
    if !text.is_empty() {
        // a closed pipe is not an error worth reporting
        let _ = if outcome.code == 0 || outcome.code == EXIT_HYPOTHESIS {
            writeln!(std::io::stdout(), "{text}")
        } else {
            writeln!(std::io::stderr(), "{text}")
        };
    }
    ExitCode::from(outcome.code as u8)
}
