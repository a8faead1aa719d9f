//! `sfl report`: pools JSONL records that differ only by seed.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use serde_json::Value;
use sfl_core::experiments::{config_hash, curve_csv, CurvePoint};
use sfl_core::stats::ls_slope;

use crate::error::{CliError, CliResult};
use crate::run::verify_manifest;

#[derive(Debug, Deserialize)]
struct RawRecord {
    schema_version: u32,
    kind: String,
    config_hash: String,
    family_hash: String,
    config: Value,
    result: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Family {
    pub family_hash: String,
    pub kind: String,
    pub records: usize,
    /// Pooled curve, if the records carry one.
    pub curve: Option<Vec<CurvePoint>>,
    /// Fit of `estimate ~ (C epsilon)^k` over points with hits.
    pub fit: Option<(f64, f64)>,
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub schema_version: u32,
    pub families: Vec<Family>,
}

impl Report {
    pub fn summary(&self) -> String {
        let mut out = String::new();
        for f in &self.families {
            let _ = write!(out, "{} {} records={}", &f.family_hash[..16], f.kind, f.records);
            if let Some(curve) = &f.curve {
                let _ = write!(out, " trials={}", curve.first().map_or(0, |p| p.trials));
                match f.fit {
                    Some((k, c)) => {
                        let _ = write!(out, " exponent={k:.4} constant={c:.4}");
                    }
                    None => out.push_str(" exponent=n/a"),
                }
            }
            out.push('\n');
            for p in f.curve.iter().flatten() {
                let _ = writeln!(
                    out,
                    "  eps={:<10} hits={:<8} estimate={:.6e} ci=[{:.6e}, {:.6e}]",
                    p.epsilon, p.hits, p.estimate, p.ci_lo, p.ci_hi
                );
            }
        }
        out
    }
}

fn read_records(dir: &Path) -> CliResult<Vec<(PathBuf, RawRecord)>> {
    let entries = fs::read_dir(dir).map_err(|e| CliError::Config(format!("{}: {e}", dir.display())))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    paths.sort();
    let mut out = Vec::new();
    for path in paths {
        let text = fs::read_to_string(&path).map_err(|e| CliError::io(path.display(), e))?;
        for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let rec: RawRecord = serde_json::from_str(line)
                .map_err(|e| CliError::Config(format!("{}:{}: {e}", path.display(), i + 1)))?;
            if config_hash(&rec.config)? != rec.config_hash {
                return Err(CliError::Config(format!("{}:{}: config hash does not match its config", path.display(), i + 1)));
            }
            out.push((path.clone(), rec));
        }
    }
    Ok(out)
}

fn curve_of(rec: &RawRecord) -> CliResult<Option<Vec<CurvePoint>>> {
    match rec.result.get("curve") {
        None => Ok(None),
        Some(v) => serde_json::from_value(v.clone()).map(Some).map_err(|e| CliError::Config(e.to_string())),
    }
}

/// Least-squares fit of `ln p = k ln epsilon + k ln C`.
fn fit(curve: &[CurvePoint]) -> Option<(f64, f64)> {
    let (x, y): (Vec<f64>, Vec<f64>) =
        curve.iter().filter(|p| p.hits > 0 && p.epsilon > 0.0).map(|p| (p.epsilon.ln(), p.estimate.ln())).unzip();
    if x.len() < 2 {
        return None;
    }
    let k = ls_slope(&x, &y);
    let n = x.len() as f64;
    let intercept = y.iter().sum::<f64>() / n - k * x.iter().sum::<f64>() / n;
    (k != 0.0).then(|| (k, (intercept / k).exp()))
}

fn pool(a: &mut [CurvePoint], b: &[CurvePoint]) -> bool {
    if a.len() != b.len() || a.iter().zip(b).any(|(p, q)| p.epsilon != q.epsilon) {
        return false;
    }
    for (p, q) in a.iter_mut().zip(b) {
        *p = CurvePoint::new(p.epsilon, p.threshold, p.hits + q.hits, p.trials + q.trials);
    }
    true
}

/// Reads every `*.jsonl` in `dir`, pools curves per family and writes one
/// `pooled-<family>.csv` per curve family into `out`.
pub fn report(dir: &Path, out: &Path) -> CliResult<Report> {
    let records = read_records(dir)?;
    for entry in fs::read_dir(dir).map_err(|e| CliError::io(dir.display(), e))?.flatten() {
        let path = entry.path();
        if path.to_string_lossy().ends_with(".manifest.json") {
            verify_manifest(&path, dir)?;
        }
    }
    let Some((_, first)) = records.first() else {
        return Err(CliError::Config(format!("no records in {}", dir.display())));
    };
    let version = first.schema_version;
    if let Some((path, r)) = records.iter().find(|(_, r)| r.schema_version != version) {
        return Err(CliError::Config(format!(
            "mixed schema versions: {} has {}, expected {version}",
            path.display(),
            r.schema_version
        )));
    }

    let mut families: BTreeMap<String, Family> = BTreeMap::new();
    for (path, rec) in &records {
        let curve = curve_of(rec)?;
        match families.get_mut(&rec.family_hash) {
            None => {
                families.insert(
                    rec.family_hash.clone(),
                    Family { family_hash: rec.family_hash.clone(), kind: rec.kind.clone(), records: 1, curve, fit: None, csv: None },
                );
            }
            Some(f) => {
                f.records += 1;
                if let (Some(acc), Some(c)) = (f.curve.as_mut(), curve.as_ref()) {
                    if !pool(acc, c) {
                        return Err(CliError::Config(format!("{}: epsilon grid differs within its family", path.display())));
                    }
                }
            }
        }
    }

    if families.values().any(|f| f.curve.is_some()) {
        fs::create_dir_all(out).map_err(|e| CliError::io(out.display(), e))?;
    }
    for f in families.values_mut() {
        if let Some(curve) = &f.curve {
            f.fit = fit(curve);
            let path = out.join(format!("pooled-{}.csv", &f.family_hash[..16]));
            fs::write(&path, curve_csv(curve)).map_err(|e| CliError::io(path.display(), e))?;
            f.csv = Some(path);
        }
    }
    Ok(Report { schema_version: version, families: families.into_values().collect() })
}
