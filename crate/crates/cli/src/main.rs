mod commands;
mod manifest;
mod svg;
mod trace;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use stlgame_core::fsp::FspError;
use stlgame_core::policy::PolicyError;
use stlgame_core::rollout::RolloutError;
use stlgame_core::scenarios::ScenarioError;
use stlgame_core::stl::StlError;

use commands::{EvaluateArgs, ExploitabilityArgs, MonitorArgs, RolloutArgs, TrainArgs};

#[derive(Parser, Debug, Clone)]
#[command(name = "stlgame", version, about = "Train and evaluate two-player STL games")]
pub struct Cli {
    /// Master seed (default 0; a resumed run keeps its own).
    #[arg(long, global = true, env = "STLGAME_SEED")]
    pub seed: Option<u64>,
    /// Worker threads (default: available parallelism).
    #[arg(long, global = true, env = "STLGAME_WORKERS")]
    pub workers: Option<usize>,
    /// Output location; each command documents its default.
    #[arg(long, global = true, env = "STLGAME_OUT")]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug, Clone)]
pub enum Command {
    /// Run fictitious self-play and write per-iteration checkpoints.
    Train(TrainArgs),
    /// Check a trace CSV against a formula.
    Monitor(MonitorArgs),
    /// Play a checkpoint's mixture against opponents, or run the held-out experiment.
    Evaluate(EvaluateArgs),
    /// Train best responses against a checkpoint's profile and report its exploitability.
    Exploitability(ExploitabilityArgs),
    /// Simulate one episode and write its trace.
    Rollout(RolloutArgs),
    /// Re-run the command recorded in a manifest.
    Replay {
        manifest: PathBuf,
    },
}

/// Bad input from the user: exit code 2.
#[derive(Debug)]
pub struct Usage(pub String);

impl fmt::Display for Usage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

pub fn usage(message: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(message.into()))
}

/// Exit code the command asks for when it succeeds.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    Negative,
}

fn is_usage_stl(e: &StlError) -> bool {
    !matches!(e, StlError::Autodiff(_))
}

fn is_usage_policy(e: &PolicyError) -> bool {
    matches!(e, PolicyError::Io { .. } | PolicyError::Format { .. } | PolicyError::Invalid(_) | PolicyError::Mixture(_))
}

fn is_usage_fsp(e: &FspError) -> bool {
    match e {
        FspError::Budget(_) | FspError::EmptySet(_) | FspError::Overlap(_) | FspError::Checkpoint { .. } => true,
        FspError::Scenario(_) => true,
        FspError::Stl(s) => is_usage_stl(s),
        FspError::Policy(p) => is_usage_policy(p),
        FspError::Rollout(RolloutError::Stl(s)) => is_usage_stl(s),
        _ => false,
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        let usage = cause.is::<Usage>()
            || cause.is::<ScenarioError>()
            || cause.is::<clap::Error>()
            || cause.downcast_ref::<StlError>().is_some_and(is_usage_stl)
            || cause.downcast_ref::<PolicyError>().is_some_and(is_usage_policy)
            || cause.downcast_ref::<FspError>().is_some_and(is_usage_fsp);
        if usage {
            return 2;
        }
    }
    3
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(usage("--workers must be at least 1"));
        }
        // a second call (replay) keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match &cli.command {
        Command::Train(args) => commands::train(&cli, args),
        Command::Monitor(args) => commands::monitor(&cli, args),
        Command::Evaluate(args) => commands::evaluate(&cli, args),
        Command::Exploitability(args) => commands::exploitability(&cli, args),
        Command::Rollout(args) => commands::rollout(&cli, args),
        Command::Replay { manifest } => {
            let replayed = manifest::replay_cli(manifest, &cli)?;
            run(replayed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Negative) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classifies_errors() {
        assert_eq!(exit_code(&usage("x")), 2);
        let e = anyhow::Error::new(ScenarioError::UnknownScenario("boats".into()));
        assert_eq!(exit_code(&e), 2);
        let e = anyhow::Error::new(FspError::Budget("epochs"));
        assert_eq!(exit_code(&e), 2);
        let e = anyhow::Error::new(std::io::Error::other("disk")).context("writing");
        assert_eq!(exit_code(&e), 3);
    }

    #[test]
    fn globals_parse_before_subcommand() {
        let cli = Cli::try_parse_from(["stlgame", "--seed", "4", "monitor", "F[0,1](p)", "t.csv"]).unwrap();
        assert_eq!(cli.seed, Some(4));
        assert!(matches!(cli.command, Command::Monitor(_)));
    }
}
