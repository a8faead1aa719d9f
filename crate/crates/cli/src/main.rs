//! `sfl`: run smallest-singular-value experiments from JSON configs.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 config error, 3 numerical failure.

mod error;
mod lcd;
mod report;
mod run;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sfl_core::arithmetic::LcdParams;
use sfl_core::ensembles::SeedSpec;
use sfl_core::experiments::{
    decoupling_check, distance_experiment, edge_convergence, random_subspace_incompressibility, reduce_verify,
    tail_probability, tensorization_check, DecouplingConfig, ExperimentConfig, TensorizationConfig,
};

use error::{CliError, CliResult};
use lcd::ModeFlag;
use run::{load_config, parse_config, EdgesConfig, NetConfig, RunContext};

#[derive(Parser)]
#[command(name = "sfl", version, about = "Monte Carlo laboratory for the smallest singular value of TX - B")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// JSON config file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, env = "SFL_OUT_DIR", default_value = "sfl-out")]
    out: PathBuf,
    /// Worker threads; 1 runs sequentially. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides `master_seed` in the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// LCD mode for `lcd`.
    #[arg(long, global = true, value_enum, default_value = "both")]
    mode: ModeFlag,
}

#[derive(Subcommand)]
enum Command {
    /// Tail of s_n(TX - B) over an epsilon grid.
    Tail,
    /// Extreme singular values against 1 +- sqrt(n/N).
    Edges,
    /// Distance of a fresh column to the span of the others.
    Distance,
    /// LCD of a vector (one line) or of a subspace (one basis vector per line).
    Lcd {
        input: PathBuf,
        /// Sampled directions in Monte Carlo mode.
        #[arg(long, default_value_t = 1000)]
        directions: usize,
    },
    /// Build an epsilon-net of the sphere and probe its covering.
    Net,
    /// Check the truncation and rescaling identity trial by trial.
    ReduceVerify,
    /// Both sides of the decoupling inequality.
    Decoupling,
    /// Tensorization of small-ball bounds.
    Tensorize,
    /// Compressibility and LCD of random subspaces.
    SubspaceIncomp,
    /// Pool records by config family and write curve CSVs next to them.
    Report {
        /// Record directory; defaults to the output directory.
        dir: Option<PathBuf>,
    },
}

fn config_path(common: &Common) -> CliResult<&Path> {
    common.config.as_deref().ok_or_else(|| CliError::Config("--config is required".into()))
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let c = &cli.common;
    let ctx = |path| RunContext { config_path: path, out_dir: &c.out, workers: c.workers };
    let done = |record: PathBuf| println!("{}", record.display());
    match cli.command {
        Command::Tail => {
            let path = config_path(c)?;
            let cfg: ExperimentConfig = load_config(path, c.seed)?;
            done(ctx(path).run("tail", &cfg, |cfg, e| Ok(tail_probability(cfg, e)?), |r| Some(&r.curve))?);
        }
        Command::Distance => {
            let path = config_path(c)?;
            let cfg: ExperimentConfig = load_config(path, c.seed)?;
            done(ctx(path).run("distance", &cfg, |cfg, e| Ok(distance_experiment(cfg, e)?), |r| Some(&r.curve))?);
        }
        Command::ReduceVerify => {
            let path = config_path(c)?;
            let cfg: ExperimentConfig = load_config(path, c.seed)?;
            done(ctx(path).run("reduce-verify", &cfg, |cfg, e| Ok(reduce_verify(cfg, e)?), |_| None)?);
        }
        Command::SubspaceIncomp => {
            let path = config_path(c)?;
            let cfg: ExperimentConfig = load_config(path, c.seed)?;
            let f = |cfg: &ExperimentConfig, e| Ok(random_subspace_incompressibility(cfg, e)?);
            done(ctx(path).run("subspace-incomp", &cfg, f, |_| None)?);
        }
        Command::Edges => {
            let path = config_path(c)?;
            let cfg: EdgesConfig = load_config(path, c.seed)?;
            let f = |cfg: &EdgesConfig, e| {
                Ok(edge_convergence(cfg.big_n, cfg.n, &cfg.dist, cfg.trials, SeedSpec::new(cfg.master_seed, 0), e)?)
            };
            done(ctx(path).run("edges", &cfg, f, |_| None)?);
        }
        Command::Net => {
            let path = config_path(c)?;
            let cfg: NetConfig = load_config(path, c.seed)?;
            done(ctx(path).run("net", &cfg, |cfg, _| run::net(cfg), |_| None)?);
        }
        Command::Decoupling => {
            let path = config_path(c)?;
            let cfg: DecouplingConfig = load_config(path, c.seed)?;
            done(ctx(path).run("decoupling", &cfg, |cfg, e| Ok(decoupling_check(cfg, e)?), |_| None)?);
        }
        Command::Tensorize => {
            let path = config_path(c)?;
            let cfg: TensorizationConfig = load_config(path, c.seed)?;
            done(ctx(path).run("tensorize", &cfg, |cfg, e| Ok(tensorization_check(cfg, e)?), |_| None)?);
        }
        Command::Lcd { input, directions } => {
            let text = fs::read_to_string(&input).map_err(|e| CliError::Config(format!("{}: {e}", input.display())))?;
            let parsed = lcd::parse_input(&text).map_err(|e| match e {
                CliError::Config(m) => CliError::Config(format!("{}: {m}", input.display())),
                e => e,
            })?;
            let params: LcdParams = match &c.config {
                Some(p) => {
                    let text = fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                    parse_config(&text, &p.display().to_string())?
                }
                None => LcdParams::default(),
            };
            let out = lcd::run(&parsed, &params, c.mode, directions, c.seed.unwrap_or(0))?;
            println!("{}", serde_json::to_string(&out).map_err(|e| CliError::Numerical(e.to_string()))?);
        }
        Command::Report { dir } => {
            let dir = dir.unwrap_or_else(|| c.out.clone());
            let rep = report::report(&dir, &dir)?;
            print!("{}", rep.summary());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sfl: {e}");
            e.exit_code()
        }
    }
}
