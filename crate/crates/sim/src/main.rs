use std::process::ExitCode;

fn main() -> ExitCode {
    selda_sim::cli::run(std::env::args_os())
}
