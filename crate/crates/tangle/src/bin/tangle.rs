use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

/// Wrapped-horseshoe return maps: escape maps, orbits, fixed points,
/// certification, tangencies and Melnikov-derived constants.
#[derive(Parser)]
#[command(name = "tangle", version)]
struct Args {
    /// Config file with one `key = value` per line.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// A command name and/or `key=value` overrides.
    settings: Vec<String>,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let file = match args.config {
        Some(p) => match std::fs::read_to_string(&p) {
            Ok(text) => Some((p.display().to_string(), text)),
            Err(e) => {
                eprintln!("tangle: cannot read {}: {e}", p.display());
                return ExitCode::from(2);
            }
        },
        None => None,
    };
    let env_out = std::env::var_os(tangle::cli::OUT_DIR_ENV).map(PathBuf::from);
    ExitCode::from(tangle::cli::main_with(file, &args.settings, env_out) as u8)
}
