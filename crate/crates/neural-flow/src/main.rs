use std::process::ExitCode;

fn main() -> ExitCode {
    neural_flow::cli::run()
}
