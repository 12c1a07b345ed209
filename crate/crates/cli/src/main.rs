use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use overdamp::{audit_snapshot, execute, load_config, Failure, Mode};

#[derive(Parser)]
#[command(name = "overdamp", version, about = "Kinetic/fluid relaxation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run an epsilon sweep and fit convergence rates.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Overrides `output.dir`.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Re-evaluate the functionals on a stored snapshot.
    Audit {
        #[arg(long)]
        snapshot: PathBuf,
    },
}

fn fail(f: &Failure) -> ExitCode {
    eprintln!("overdamp: {f}");
    ExitCode::from(f.exit_code() as u8)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let progress = |msg: &str| eprintln!("{msg}");
    let (config, out_dir, sweep_only) = match cli.command {
        Command::Audit { snapshot } => {
            return match audit_snapshot(&snapshot) {
                Ok((report, passed)) => {
                    let text = serde_json::to_string_pretty(&report).unwrap_or_default();
                    if writeln!(std::io::stdout(), "{text}").is_err() {
                        return fail(&Failure::Io("cannot write the report to stdout".into()));
                    }
                    if passed {
                        ExitCode::SUCCESS
                    } else {
                        fail(&Failure::Audit("snapshot checks failed".into()))
                    }
                }
                Err(f) => fail(&f),
            };
        }
        Command::Run { config, out_dir } => (config, out_dir, false),
        Command::Sweep { config, out_dir } => (config, out_dir, true),
    };
    let cfg = match load_config(&config) {
        Ok(c) => c,
        Err(f) => return fail(&f),
    };
    if sweep_only && cfg.mode != Mode::Sweep {
        return fail(&Failure::Config(format!(
            "`sweep` needs mode = \"sweep\", found \"{}\"",
            cfg.mode.name()
        )));
    }
    match execute(&cfg, out_dir.as_deref(), &progress) {
        Ok(outcome) => {
            eprintln!("wrote {} files to {}", outcome.files.len(), outcome.out_dir.display());
            ExitCode::SUCCESS
        }
        Err((outcome, f)) => {
            if let Some(o) = outcome {
                eprintln!("wrote {} files to {}", o.files.len(), o.out_dir.display());
            }
            fail(&f)
        }
    }
}
