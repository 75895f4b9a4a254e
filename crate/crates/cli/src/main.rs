//! `kamreduce`: run reductions, rotation numbers, sweeps and schedule checks
//! from a TOML configuration.

mod config;
mod run;

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Parser;
use kamreduce::driver::RunMode;

use crate::config::{Command, Emit, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "kamreduce", version, about = "KAM reducibility experiments for quasi-periodic cocycles")]
struct Cli {
    /// Overrides `command` from the configuration.
    #[arg(value_enum)]
    command: Option<Command>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long, value_parser = parse_mode)]
    mode: Option<RunMode>,
    #[arg(long)]
    jmax: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_enum)]
    emit: Option<Emit>,
}

fn parse_mode(s: &str) -> std::result::Result<RunMode, String> {
    s.parse().map_err(|e: kamreduce::KamError| e.to_string())
}

fn resolve(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(c) = cli.command {
        cfg.command = c;
    }
    if let Some(m) = cli.mode {
        cfg.mode = m;
    }
    if let Some(j) = cli.jmax {
        cfg.schedule.j_max = j;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(e) = cli.emit {
        cfg.emit = e;
    }
    Ok(cfg)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("KAMREDUCE_THREADS") {
        let n: usize = threads.parse().context("KAMREDUCE_THREADS must be a positive integer")?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    let cfg = resolve(&cli)?;
    let outputs = run::run(&cfg)?;
    outputs.write(&cli.out)?;
    for (name, _) in &outputs.files {
        println!("{}", cli.out.join(name).display());
    }
    Ok(())
}
