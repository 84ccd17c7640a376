use std::process::ExitCode;

fn main() -> ExitCode {
    let result = rsma_cli::parse_args(std::env::args_os()).and_then(|c| rsma_cli::run(&c));
    match result {
        Ok(_) => ExitCode::SUCCESS,
        Err(rsma_cli::CliError::Info(text)) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.record());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
