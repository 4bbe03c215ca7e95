use std::process::ExitCode;

fn main() -> ExitCode {
    teleop_informer::cli::run()
}
