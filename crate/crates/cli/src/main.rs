use std::process::ExitCode;

use clap::Parser;
use qgeom_cli::{run, threads_from_env, Cli, CliError};

fn start(cli: Cli) -> Result<(), CliError> {
    if let Some(threads) = threads_from_env(std::env::var("QGEOM_THREADS").ok().as_deref())? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    run(cli, &mut std::io::stdout().lock())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match start(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("qgeom: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
