use std::process::ExitCode;

fn main() -> ExitCode {
    coxnet::cli::main_with_args(std::env::args_os())
}
