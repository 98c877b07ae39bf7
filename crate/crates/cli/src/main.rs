use std::process::ExitCode;

use clap::Parser;
use ddp_cli::opts::Cli;

fn main() -> ExitCode {
    // Die quietly when stdout is closed early (e.g. piped into head).
    #[cfg(unix)]
    unsafe {
        libc::signal(libc::SIGPIPE, libc::SIG_DFL);
    }
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DDP_LOG", "warn")).init();
    let cli = Cli::parse();
    match ddp_cli::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            // One machine-readable line on stderr; exit code stays nonzero.
            let line = serde_json::json!({
                "error": {"kind": e.kind(), "message": e.to_string()}
            });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
