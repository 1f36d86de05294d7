use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use memprobe::experiment::{
    run_degrade, run_e2e, run_evaluate, run_proxcheck, run_recover, run_train, ExperimentConfig,
};

/// Recover training images from an overfitted autoencoder.
#[derive(Parser, Debug)]
#[command(name = "memprobe", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train an autoencoder to the configured loss checkpoints.
    Train(Common),
    /// Erase (and optionally add noise to) every training image.
    Degrade(Common),
    /// Recover the degraded images.
    Recover(Common),
    /// Score recovered images against the originals.
    Evaluate(Common),
    /// Check whether the model is a proximity operator.
    Proxcheck(Common),
    /// Run train, degrade, recover, evaluate and proxcheck in order.
    E2e(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Config file with `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// ADMM penalty, or `auto`.
    #[arg(long)]
    gamma: Option<String>,
    /// e.g. `uniform_random:0.5`, `center_block:0.25`, `half:left`.
    #[arg(long)]
    mask_pattern: Option<String>,
    #[arg(long)]
    sigma_eps: Option<f64>,
    /// Final training loss.
    #[arg(long)]
    loss_target: Option<f64>,
    /// Recovery modes, comma separated: unknown-h, known-h, baseline.
    #[arg(long)]
    mode: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Any config key, as KEY=VALUE. Repeatable; applied last.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    fn config(&self) -> memprobe::Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::from_file(p)?,
            None => ExperimentConfig::default(),
        };
        let mut overrides: Vec<(&str, String)> = Vec::new();
        if let Some(v) = self.seed {
            overrides.push(("seed", v.to_string()));
        }
        if let Some(v) = &self.gamma {
            overrides.push(("recover.gamma", v.clone()));
        }
        if let Some(v) = &self.mask_pattern {
            overrides.push(("degrade.mask", v.clone()));
        }
        if let Some(v) = self.sigma_eps {
            overrides.push(("degrade.sigma_eps", v.to_string()));
        }
        if let Some(v) = self.loss_target {
            overrides.push(("train.loss_target", v.to_string()));
        }
        if let Some(v) = &self.mode {
            overrides.push(("recover.modes", v.clone()));
        }
        if let Some(v) = &self.out {
            overrides.push(("output", v.display().to_string()));
        }
        for (k, v) in overrides {
            cfg.set(k, &v)?;
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| {
                memprobe::Error::Config(format!("--set expects KEY=VALUE, got '{kv}'"))
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        // Usage errors exit with 2, --help/--version with 0.
        Err(e) => e.exit(),
    };
    let (stage, common): (fn(&ExperimentConfig) -> memprobe::Result<String>, &Common) =
        match &cli.command {
            Command::Train(c) => (run_train, c),
            Command::Degrade(c) => (run_degrade, c),
            Command::Recover(c) => (run_recover, c),
            Command::Evaluate(c) => (run_evaluate, c),
            Command::Proxcheck(c) => (run_proxcheck, c),
            Command::E2e(c) => (run_e2e, c),
        };
    let cfg = match common.config() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match stage(&cfg) {
        Ok(report) => {
            println!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
