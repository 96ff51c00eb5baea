use std::io::Write;
use std::process::ExitCode;
use std::sync::Arc;

use clap::Parser;

use sarplan_cli::service::{self, AppState};
use sarplan_cli::{load_dem, run, Cli, CliError, Command};

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SARPLAN_LOG", "warn"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Serve(args) => serve(args),
        _ => run(&cli).map(|outcome| {
            let _ = std::io::stdout().write_all(outcome.stdout.as_bytes());
            let _ = std::io::stderr().write_all(outcome.stderr.as_bytes());
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sarplan: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn serve(args: &sarplan_cli::ServeArgs) -> Result<(), CliError> {
    let dem = load_dem(&args.dem)?;
    let dem_id = args
        .dem
        .file_stem()
        .map_or_else(|| "dem".to_string(), |s| s.to_string_lossy().into_owned());
    let state = Arc::new(AppState { dem, dem_id });
    let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
    runtime
        .block_on(service::serve(state, &args.bind, args.port))
        .map_err(|e| CliError::input(format!("cannot serve on {}:{}: {e}", args.bind, args.port), None))
}
