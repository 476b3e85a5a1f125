use std::process::ExitCode;

fn main() -> ExitCode {
    dispersive_cz::cli::main_with_args(std::env::args_os())
}
