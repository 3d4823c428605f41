use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = vbm::app::Cli::parse();
    match vbm::app::run(cli) {
        Ok(out) => {
            print!("{}", out.text);
            if out.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
