use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use idswap_cli::{run, Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "idswap", about = "Identity search and face anonymization in generative latent spaces", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Score consecutive layer windows and pick identity layers.
    SearchLayers(Common),
    /// Score channel blocks and greedily select identity channels.
    SearchChannels(Common),
    /// Anonymize an image folder (mode: layers, channels, mask, swapper).
    Anonymize(Common),
    /// Train the latent swapper on masked-anonymization targets.
    TrainSwapper(Common),
    /// Privacy and utility evaluation of original vs anonymized folders.
    Evaluate(Common),
    /// Write random faces from the backend prior.
    SampleFaces(Common),
}

#[derive(Args)]
struct Common {
    /// Flat TOML run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `synthetic` or a backend directory.
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override a config key, e.g. `--set mode=mask`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let (command, common) = match cli.command {
        Cmd::SearchLayers(c) => (Command::SearchLayers, c),
        Cmd::SearchChannels(c) => (Command::SearchChannels, c),
        Cmd::Anonymize(c) => (Command::Anonymize, c),
        Cmd::TrainSwapper(c) => (Command::TrainSwapper, c),
        Cmd::Evaluate(c) => (Command::Evaluate, c),
        Cmd::SampleFaces(c) => (Command::SampleFaces, c),
    };
    let overrides = Overrides {
        backend: common.backend,
        seed: common.seed,
        out: common.out,
        set: common.set,
    };
    let result = RunConfig::load(common.config.as_deref(), &overrides).and_then(|cfg| run(command, &cfg));
    match result {
        Ok(outcome) => {
            log::info!(
                "{}: {} outputs in {} ({} items skipped)",
                command.name(),
                outcome.outputs.len(),
                outcome.out.display(),
                outcome.failures.len()
            );
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
