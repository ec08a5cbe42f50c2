use std::process::ExitCode;

fn main() -> ExitCode {
    secomm::cli::main_with_args(std::env::args_os())
}
