use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::Parser;
use serde_json::json;
use subtype_cli::{execute, CliError, Command, Overrides, PipelineConfig};

/// Discrete latent features, clustering and downstream statistics for
/// expression matrices.
#[derive(Debug, Parser)]
#[command(name = "subtype", version)]
struct Cli {
    /// INI configuration file; every key has a default.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Run directory receiving all outputs.
    #[arg(long, global = true, value_name = "DIR", default_value = "run")]
    out: PathBuf,
    /// Root seed, overriding `run.seed`.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Worker threads, overriding `run.threads`.
    #[arg(long, global = true, value_name = "N")]
    threads: Option<usize>,
    /// Extra `section.key=value` setting; repeatable.
    #[arg(long = "set", global = true, value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

fn run() -> Result<(), CliError> {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return Ok(());
        }
        Err(e) => {
            let text = e.render().to_string();
            let first = text.lines().next().unwrap_or("invalid command line");
            return Err(CliError::Usage(first.trim_start_matches("error: ").to_string()));
        }
    };
    let overrides = Overrides {
        seed: cli.seed,
        threads: cli.threads,
        set: cli.set,
    };
    let cfg = PipelineConfig::load(cli.config.as_deref(), &overrides)?;
    let outputs = execute(cli.command, &cfg, &cli.out)?;
    println!(
        "{}",
        json!({ "status": "ok", "command": cli.command.name(), "out": cli.out.display().to_string(), "outputs": outputs })
    );
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
