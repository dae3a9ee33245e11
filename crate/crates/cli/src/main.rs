use std::process::ExitCode;

use clap::Parser;

fn main() -> ExitCode {
    let cli = match epca_cli::Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version go to stdout with exit 0; everything else is a usage error.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match epca_cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("epca: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
