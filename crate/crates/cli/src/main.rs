//! Command-line entry point: manifest construction, test-set
//! perturbation, prompt generation, training stages, evaluation tracks,
//! and embedding visualization.
//!
//! Every subcommand prints its resolved configuration as one JSON line
//! before running. Failures print one machine-parseable JSON error line
//! on standard error and exit nonzero. A global `--seed` overrides any
//! config-file or flag seed uniformly; `SYNTHDET_DATA_ROOT` overrides
//! the data root.

mod cmd_eval;
mod cmd_manifest;
mod cmd_perturb;
mod cmd_prompts;
mod cmd_train;
mod cmd_viz;

use clap::{Parser, Subcommand};

pub const DATA_ROOT_ENV: &str = "SYNTHDET_DATA_ROOT";

#[derive(Parser)]
#[command(
    name = "synthdet",
    about = "Synthetic-image detector toolkit: manifests, perturbation, prompts, training, evaluation, visualization",
    version
)]
struct Cli {
    /// Override every seed in configs and flags.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build, split, calibrate, and validate dataset manifests.
    #[command(subcommand)]
    Manifest(cmd_manifest::ManifestCmd),
    /// Materialize test-set perturbations and sweep grids.
    #[command(subcommand)]
    Perturb(cmd_perturb::PerturbCmd),
    /// Generate prompts for external image generators.
    #[command(subcommand)]
    Prompts(cmd_prompts::PromptsCmd),
    /// Run the training stages.
    #[command(subcommand)]
    Train(cmd_train::TrainCmd),
    /// Evaluate a calibrated detector.
    #[command(subcommand)]
    Eval(cmd_eval::EvalCmd),
    /// Embedding visualization.
    #[command(subcommand)]
    Viz(cmd_viz::VizCmd),
}

/// Print the resolved configuration of a subcommand before it runs.
pub(crate) fn announce(config: serde_json::Value) {
    println!("config: {config}");
}

pub(crate) fn data_root_override() -> Option<String> {
    std::env::var(DATA_ROOT_ENV).ok().filter(|s| !s.is_empty())
}

pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap renders --help/--version through the error path with
            // a zero exit.
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.command {
        Command::Manifest(cmd) => cmd_manifest::run(cmd, cli.seed),
        Command::Perturb(cmd) => cmd_perturb::run(cmd, cli.seed),
        Command::Prompts(cmd) => cmd_prompts::run(cmd, cli.seed),
        Command::Train(cmd) => cmd_train::run(cmd, cli.seed),
        Command::Eval(cmd) => cmd_eval::run(cmd, cli.seed),
        Command::Viz(cmd) => cmd_viz::run(cmd, cli.seed),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let line = serde_json::json!({ "error": format!("{e:#}") });
            eprintln!("{line}");
            1
        }
    }
}

fn main() {
    std::process::exit(dispatch(std::env::args_os()));
}
