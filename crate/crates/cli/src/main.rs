//! `semcom`: train, evaluate and adapt split semantic coders from the shell.

mod commands;
mod config;
mod data;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::adapt::Part;
use commands::train::Role;
use config::RunConfig;
use error::CliResult;

#[derive(Parser, Debug)]
#[command(name = "semcom", version, about = "Split semantic communication over a noisy channel")]
struct Cli {
    /// TOML run configuration; every key has a default.
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set channel.snr_db=3`. Repeatable, applied in order.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Where reports and model files go (beats `output.dir` and SEMCOM_OUTPUT_DIR).
    #[arg(long, global = true)]
    output_dir: Option<PathBuf>,
    /// Shorthand for `--set training.epochs=N`.
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Shorthand for `--set channel.snr_db=X`.
    #[arg(long, global = true, allow_negative_numbers = true)]
    snr_db: Option<f64>,
    /// Shorthand for `--set channel.cr=X`.
    #[arg(long, global = true)]
    cr: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Split training of encoder and decoder.
    Train {
        #[arg(long, value_enum, default_value_t = Role::Both)]
        role: Role,
    },
    /// Accuracy / PSNR / IoU of trained runs over an SNR grid.
    Eval {
        /// Run directory holding encoder.bin and decoder.bin. Repeatable.
        #[arg(long = "run", value_name = "DIR")]
        runs: Vec<PathBuf>,
        /// Also score the uncoded link (CR = 1, no encoder or decoder).
        #[arg(long)]
        identity: bool,
    },
    /// Train the receiver's task model alone.
    PretrainPhi,
    /// Reconstruction-only pretraining of both coders.
    PretrainRecon,
    /// Train the domain adaptation networks.
    DaTrain,
    /// Map observed images into the library domain.
    DaApply {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, value_enum, default_value_t = Part::All)]
        split: Part,
    },
    /// Compare no adaptation, adaptation and retraining.
    DaEval,
    /// Proxy A-distance between library and observed data.
    Pad,
}

impl Cli {
    fn overrides(&self) -> Vec<String> {
        let mut o = self.overrides.clone();
        if let Some(n) = self.epochs {
            o.push(format!("training.epochs={n}"));
        }
        if let Some(s) = self.snr_db {
            o.push(format!("channel.snr_db={s:?}"));
        }
        if let Some(c) = self.cr {
            o.push(format!("channel.cr={c:?}"));
        }
        o
    }
}

fn run(cli: &Cli) -> CliResult<()> {
    let mut cfg = RunConfig::load(cli.config.as_deref(), &cli.overrides())?;
    if let Some(dir) = &cli.output_dir {
        cfg.output.dir = dir.clone();
    }
    match &cli.command {
        Command::Train { role } => commands::train::run(&cfg, *role),
        Command::Eval { runs, identity } => commands::eval::run(&cfg, runs, *identity),
        Command::PretrainPhi => commands::pretrain::phi(&cfg),
        Command::PretrainRecon => commands::pretrain::recon(&cfg),
        Command::DaTrain => commands::adapt::train(&cfg),
        Command::DaApply { bundle, split } => commands::adapt::apply(&cfg, bundle, *split),
        Command::DaEval => commands::adapt::eval(&cfg),
        Command::Pad => commands::pad::run(&cfg),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEMCOM_LOG", "info")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
