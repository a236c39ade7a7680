use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use itowentzell::cli::{parse_config_with, run, Command, OutputFormat, RunConfig};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CommandArg {
    Verify,
    Converge,
    Convert,
    ListScenarios,
}

impl From<CommandArg> for Command {
    fn from(c: CommandArg) -> Self {
        match c {
            CommandArg::Verify => Command::Verify,
            CommandArg::Converge => Command::Converge,
            CommandArg::Convert => Command::Convert,
            CommandArg::ListScenarios => Command::ListScenarios,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

/// Pathwise verification of the generalized Itô–Wentzell formula.
#[derive(Debug, Parser)]
#[command(version)]
struct Cli {
    command: CommandArg,
    /// Run config (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<FormatArg>,
    /// Master seed, overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn execute(cli: &Cli) -> Result<bool, String> {
    let command = Command::from(cli.command);
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
            parse_config_with(&text, Some(command)).map_err(|e| format!("{}: {e}", path.display()))?
        }
        None if command == Command::ListScenarios => RunConfig::new(command),
        None => return Err(format!("{} needs --config <file>", command.as_str())),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(f) = cli.format {
        config.format = match f {
            FormatArg::Csv => OutputFormat::Csv,
            FormatArg::Json => OutputFormat::Json,
        };
    }
    if cli.threads == Some(0) {
        return Err("--threads must be >= 1".into());
    }

    let output = run(&config, cli.threads).map_err(|e| e.to_string())?;
    match &cli.out {
        Some(path) => std::fs::write(path, &output.text).map_err(|e| format!("{}: {e}", path.display()))?,
        None => print!("{}", output.text),
    }
    if !output.passed {
        eprintln!("{} row(s) failed their tolerance", output.failed_rows);
    }
    Ok(output.passed)
}
