//! Argument parsing and dispatch.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::Value;

use crate::commands::{self, Context};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::synth::SynthParams;

#[derive(Debug, Parser)]
#[command(name = "gridsleuth", version, about = "Locate an undisclosed mobility grid on a map")]
pub struct Cli {
    /// Run configuration (JSON). Relative paths inside resolve against its directory.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Record and unique-user activity rasters.
    Rasterize,
    /// Binary template from a raster or pings.
    Threshold,
    /// Background image from land polygons.
    Landmask,
    /// Find the template on the background and emit the located grid.
    Locate,
    /// Attach activity and user counts to a located grid.
    Georef,
    /// Home detection and census correlation.
    Validate,
    /// Top-k location identifiability under coarsening.
    Identifiability,
    /// Block-sum the activity rasters.
    Rescale {
        #[arg(long)]
        factor: usize,
    },
    /// Hexagon-binned activity and its binary raster.
    Hex,
    /// Write a synthetic fixture with a matching configuration.
    Synth {
        #[arg(long)]
        grid_cells: Option<u32>,
        #[arg(long)]
        pings: Option<usize>,
        #[arg(long)]
        users: Option<u32>,
    },
}

/// Loads the configuration, applies flag overrides and returns it with the
/// directory relative paths resolve against.
pub fn configure(cli: &Cli) -> Result<(RunConfig, PathBuf)> {
    let (mut config, base) = match &cli.config {
        Some(path) => {
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            (RunConfig::load(path)?, base)
        }
        None => (RunConfig::default(), PathBuf::new()),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(t) = cli.threads {
        if t == 0 {
            return Err(Error::Usage("--threads must be positive".into()));
        }
        config.threads = Some(t);
    }
    Ok((config, base))
}

pub fn run(cli: &Cli) -> Result<Value> {
    let (config, base) = configure(cli)?;
    if let Some(n) = config.threads {
        // The pool can only be set once per process; later calls keep it.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let mut ctx = Context::new(config, &base)?;
    if let Some(out) = &cli.out {
        std::fs::create_dir_all(out).map_err(crate::error::io_err(out))?;
        ctx.out = out.clone();
    }
    match &cli.command {
        Command::Rasterize => commands::rasterize(&ctx),
        Command::Threshold => commands::threshold(&ctx),
        Command::Landmask => commands::landmask(&ctx),
        Command::Locate => commands::locate(&ctx),
        Command::Georef => commands::georef(&ctx),
        Command::Validate => commands::validate(&ctx),
        Command::Identifiability => commands::identifiability(&ctx),
        Command::Rescale { factor } => commands::rescale(&ctx, *factor),
        Command::Hex => commands::hex(&ctx),
        Command::Synth { grid_cells, pings, users } => {
            let mut params = SynthParams {
                seed: ctx.config.seed,
                ..SynthParams::default()
            };
            if let Some(g) = grid_cells {
                params.grid_cells = *g;
            }
            if let Some(p) = pings {
                params.pings = *p;
            }
            if let Some(u) = users {
                params.users = *u;
            }
            commands::synth(&ctx, &params)
        }
    }
}
