//! Config loading and record persistence for the experiment subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sfl_core::ensembles::{EntryDistribution, SeedSpec};
use sfl_core::experiments::{
    config_hash, curve_csv, CurvePoint, DecouplingConfig, ExperimentConfig, ExperimentRecord, TensorizationConfig,
    SCHEMA_VERSION,
};
use sfl_core::geometry::{build_net, verify_covering, CoveringReport, NetMode, COVERING_PROBES};
use sfl_core::Execution;

use crate::error::{CliError, CliResult};

/// Configs whose master seed `--seed` may override.
pub trait Seeded: Serialize + DeserializeOwned {
    fn set_seed(&mut self, seed: u64);
}

macro_rules! seeded {
    ($($t:ty),*) => {$(
        impl Seeded for $t {
            fn set_seed(&mut self, seed: u64) {
                self.master_seed = seed;
            }
        }
    )*};
}

seeded!(ExperimentConfig, DecouplingConfig, TensorizationConfig, EdgesConfig, NetConfig);

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgesConfig {
    #[serde(rename = "N")]
    pub big_n: usize,
    pub n: usize,
    pub dist: EntryDistribution,
    pub trials: u64,
    pub master_seed: u64,
}

fn default_net_mode() -> NetMode {
    NetMode::Lattice
}

fn default_probes() -> u64 {
    COVERING_PROBES
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub n: usize,
    pub epsilon: f64,
    #[serde(default = "default_net_mode")]
    pub mode: NetMode,
    #[serde(default = "default_probes")]
    pub probes: u64,
    pub master_seed: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NetResult {
    pub dim: usize,
    pub epsilon: f64,
    pub mode: NetMode,
    pub cardinality: usize,
    pub cardinality_bound: f64,
    pub covering: CoveringReport,
}

pub fn net(cfg: &NetConfig) -> CliResult<NetResult> {
    let net = build_net(cfg.n, cfg.epsilon, cfg.mode, SeedSpec::new(cfg.master_seed, 0))?;
    let covering = verify_covering(&net, cfg.probes, SeedSpec::new(cfg.master_seed, 1 << 40));
    Ok(NetResult {
        dim: net.dim,
        epsilon: net.epsilon,
        mode: net.mode,
        cardinality: net.points.len(),
        cardinality_bound: net.cardinality_bound,
        covering,
    })
}

/// Parses `text` as a `T`, reporting serde's line and column on failure.
pub fn parse_config<T: DeserializeOwned>(text: &str, origin: &str) -> CliResult<T> {
    serde_json::from_str(text).map_err(|e| CliError::Config(format!("{origin}: {e}")))
}

pub fn load_config<T: Seeded>(path: &Path, seed: Option<u64>) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut cfg: T = parse_config(&text, &path.display().to_string())?;
    if let Some(s) = seed {
        cfg.set_seed(s);
    }
    Ok(cfg)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub kind: String,
    pub config_path: PathBuf,
    pub output_dir: PathBuf,
    pub config_hash: String,
    pub family_hash: String,
    pub code_version: String,
    pub started_at: String,
    pub finished_at: String,
    pub wall_clock_secs: f64,
    pub workers: Option<usize>,
    pub record: PathBuf,
    pub csv: Option<PathBuf>,
}

pub struct RunContext<'a> {
    pub config_path: &'a Path,
    pub out_dir: &'a Path,
    pub workers: Option<usize>,
}

impl RunContext<'_> {
    pub fn exec(&self) -> Execution {
        Execution::from_workers(self.workers)
    }

    /// Runs `f`, then writes `<kind>-<hash>.jsonl`, an optional CSV curve and
    /// a manifest. Timing lives only in the manifest so the JSONL is reproducible.
    pub fn run<C, R>(
        &self,
        kind: &str,
        cfg: &C,
        f: impl FnOnce(&C, Execution) -> CliResult<R>,
        curve: impl Fn(&R) -> Option<&[CurvePoint]>,
    ) -> CliResult<PathBuf>
    where
        C: Serialize,
        R: Serialize,
    {
        let started = SystemTime::now();
        let clock = Instant::now();
        let result = f(cfg, self.exec())?;
        let wall = clock.elapsed().as_secs_f64();
        let finished = SystemTime::now();

        let csv = curve(&result).map(curve_csv);
        let record = ExperimentRecord::new(kind, cfg, result)?;
        let stem = format!("{kind}-{}", &record.config_hash[..16]);
        fs::create_dir_all(self.out_dir).map_err(|e| CliError::io(self.out_dir.display(), e))?;
        let record_path = self.out_dir.join(format!("{stem}.jsonl"));
        write(&record_path, &record.to_jsonl()?)?;
        let csv_path = match csv {
            Some(text) => {
                let p = self.out_dir.join(format!("{stem}.csv"));
                write(&p, &text)?;
                Some(p)
            }
            None => None,
        };
        let manifest = RunManifest {
            schema_version: SCHEMA_VERSION,
            kind: kind.to_string(),
            config_path: self.config_path.to_path_buf(),
            output_dir: self.out_dir.to_path_buf(),
            config_hash: record.config_hash.clone(),
            family_hash: record.family_hash.clone(),
            code_version: record.code_version.clone(),
            started_at: humantime::format_rfc3339_millis(started).to_string(),
            finished_at: humantime::format_rfc3339_millis(finished).to_string(),
            wall_clock_secs: wall,
            workers: self.workers,
            record: record_path.clone(),
            csv: csv_path,
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::Numerical(e.to_string()))?;
        write(&self.out_dir.join(format!("{stem}.manifest.json")), &text)?;
        Ok(record_path)
    }
}

fn write(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::io(path.display(), e))
}

/// Checks a manifest in `dir` against the record it points to. A relative
/// record path that no longer resolves is looked up next to the manifest.
pub fn verify_manifest(path: &Path, dir: &Path) -> CliResult<RunManifest> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path.display(), e))?;
    let m: RunManifest = parse_config(&text, &path.display().to_string())?;
    if m.schema_version != SCHEMA_VERSION {
        return Err(CliError::Config(format!("{}: schema version {} != {SCHEMA_VERSION}", path.display(), m.schema_version)));
    }
    let record = match m.record.file_name() {
        Some(name) if !m.record.exists() => dir.join(name),
        _ => m.record.clone(),
    };
    let line = fs::read_to_string(&record).map_err(|e| CliError::io(record.display(), e))?;
    let value: serde_json::Value = parse_config(&line, &record.display().to_string())?;
    if value["config_hash"] != m.config_hash.as_str() || config_hash(&value["config"])? != m.config_hash {
        return Err(CliError::Config(format!("{}: config hash mismatch", path.display())));
    }
    Ok(m)
}
