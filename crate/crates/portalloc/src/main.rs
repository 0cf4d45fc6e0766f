use std::process::ExitCode;

fn main() -> ExitCode {
    ExitCode::from(portalloc::cli::main_with_args(std::env::args_os()))
}
