use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(thinhom_cli::run(std::env::args_os()))
}
