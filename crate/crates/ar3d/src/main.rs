use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(ar3d::cli::run_cli(std::env::args_os()) as u8)
}
