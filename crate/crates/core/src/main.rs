use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(civic_cred::cli::run(std::env::args_os()))
}
