use std::path::PathBuf;
use std::process::ExitCode;

use bpds_cli::{inspect, run, verify_dir, CliError, InspectWhat, Profile, RunOptions};
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "bpds", version, about = "Medical-record sharing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    Test,
    Production,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write its artifacts.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Overrides the scenario's group profile.
        #[arg(long, value_enum)]
        profile: Option<ProfileArg>,
    },
    /// Render one dump from an artifact directory.
    Inspect {
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(value_enum)]
        what: InspectWhat,
        /// Only log lines for this actor (label or account id).
        #[arg(long)]
        actor: Option<String>,
    },
    /// Re-check an artifact directory offline.
    Verify {
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            out,
            profile,
        } => {
            let opts = RunOptions {
                seed,
                profile: profile.map(|p| match p {
                    ProfileArg::Test => Profile::Test,
                    ProfileArg::Production => Profile::Production,
                }),
            };
            let outcome = run(&scenario, opts, &out)?;
            println!("blocks {}", outcome.blocks);
            for s in &outcome.sharing {
                let status = match s.verified {
                    Some(true) => "verified",
                    Some(false) => "failed",
                    None => "incomplete",
                };
                println!("{} <- {} parts {:?} {status}", s.user, s.patient, s.parts);
            }
            println!("artifacts written to {}", out.display());
        }
        Command::Inspect { out, what, actor } => {
            print!("{}", inspect(&out, what, actor.as_deref())?);
        }
        Command::Verify { out } => {
            let r = verify_dir(&out)?;
            println!(
                "ok: {} blocks, {} granted requests, {} access log entries",
                r.blocks, r.granted, r.log_entries
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
