use std::process::ExitCode;

use clap::Parser;

use tabuq::cli::{run_batch, Cli, Command};
use tabuq::server::{serve, AppState, API_PREFIX};

fn fail(e: &tabuq_core::Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Serve(args) => {
            let state = match AppState::open(&args.state_dir) {
                Ok(s) => s,
                Err(e) => return fail(&e),
            };
            let rt = tokio::runtime::Runtime::new().expect("tokio runtime");
            let result = rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(args.bind).await?;
                eprintln!("review API on http://{}{API_PREFIX}", listener.local_addr()?);
                serve(state, listener).await
            });
            match result {
                Ok(()) => ExitCode::SUCCESS,
                Err(e) => {
                    eprintln!("error: {e}");
                    ExitCode::FAILURE
                }
            }
        }
        other => match run_batch(other) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => fail(&e),
        },
    }
}
