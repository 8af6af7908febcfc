use std::process::ExitCode;

use latentslam_cli::Failure;

fn main() -> ExitCode {
    match latentslam_cli::run(std::env::args_os().collect()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(e)) => e.exit(),
        Err(f) => {
            eprintln!("error: {f}");
            ExitCode::from(f.code())
        }
    }
}
