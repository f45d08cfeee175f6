use std::process::ExitCode;

fn main() -> ExitCode {
    fbn::cli::init_logging();
    fbn::cli::main_with_args(std::env::args_os())
}
