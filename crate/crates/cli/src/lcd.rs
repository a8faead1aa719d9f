//! `sfl lcd`: LCD of a vector or of the span of an orthonormal basis.

use serde::Serialize;
use sfl_core::arithmetic::{lcd_subspace, lcd_vector, LcdParams, LcdResult, SubspaceLcdMode, MAX_CERTIFIED_LCD_DIM};
use sfl_core::ensembles::SeedSpec;
use sfl_core::{Matrix, Subspace};

use crate::error::{CliError, CliResult};

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum ModeFlag {
    Certified,
    Montecarlo,
    Both,
}

#[derive(Debug, PartialEq)]
pub enum LcdInput {
    Vector(Vec<f64>),
    /// Rows of the file, each a basis vector.
    Basis(Vec<Vec<f64>>),
}

#[derive(Debug, Serialize)]
pub struct LcdOutput {
    pub input: &'static str,
    pub dim: usize,
    pub ambient_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certified: Option<LcdResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub monte_carlo: Option<LcdResult>,
}

/// One vector per nonblank line; entries separated by whitespace or commas.
pub fn parse_input(text: &str) -> CliResult<LcdInput> {
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let entries: Vec<&str> = line.split(|c: char| c == ',' || c.is_whitespace()).filter(|s| !s.is_empty()).collect();
        if entries.is_empty() {
            continue;
        }
        let row = entries
            .iter()
            .map(|s| s.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| CliError::Config(format!("line {}: expected finite numbers", i + 1)))?;
        rows.push(row);
    }
    match rows.len() {
        0 => Err(CliError::Config("empty input".into())),
        1 => Ok(LcdInput::Vector(rows.pop().unwrap())),
        _ => {
            let m = rows[0].len();
            if let Some(bad) = rows.iter().position(|r| r.len() != m) {
                return Err(CliError::Config(format!("basis vector {} has length {}, expected {m}", bad + 1, rows[bad].len())));
            }
            Ok(LcdInput::Basis(rows))
        }
    }
}

/// A single vector is scanned exactly and `mode` is ignored; a basis uses
/// the certified search, directional sampling, or both.
pub fn run(input: &LcdInput, p: &LcdParams, mode: ModeFlag, directions: usize, seed: u64) -> CliResult<LcdOutput> {
    p.validate()?;
    match input {
        LcdInput::Vector(a) => Ok(LcdOutput {
            input: "vector",
            dim: 1,
            ambient_dim: a.len(),
            certified: Some(lcd_vector(a, p)?),
            monte_carlo: None,
        }),
        LcdInput::Basis(rows) => {
            let basis = Matrix::from_columns(rows[0].len(), rows)?;
            let e = Subspace::from_orthonormal(basis)?;
            let mc = SubspaceLcdMode::MonteCarlo { directions, seed: SeedSpec::new(seed, 0) };
            // `both` silently drops the certified search where it is unavailable.
            let want_cert = mode == ModeFlag::Certified || (mode == ModeFlag::Both && e.dim() <= MAX_CERTIFIED_LCD_DIM);
            let want_mc = mode != ModeFlag::Certified;
            Ok(LcdOutput {
                input: "basis",
                dim: e.dim(),
                ambient_dim: e.ambient_dim(),
                certified: want_cert.then(|| lcd_subspace(&e, p, &SubspaceLcdMode::Certified)).transpose()?,
                monte_carlo: want_mc.then(|| lcd_subspace(&e, p, &mc)).transpose()?,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_vectors_and_bases() {
        assert_eq!(parse_input("1, 0\n").unwrap(), LcdInput::Vector(vec![1.0, 0.0]));
        assert_eq!(parse_input("\n1 0 0\n0,1 0\n\n").unwrap(), LcdInput::Basis(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]));
        assert!(parse_input("  \n").is_err());
        assert!(parse_input("1 x").is_err());
        assert!(parse_input("1 0\n1").is_err());
        assert!(parse_input("nan 1").is_err());
    }

    #[test]
    fn vector_golden_value() {
        let out = run(&LcdInput::Vector(vec![1.0, 0.0]), &LcdParams::default(), ModeFlag::Both, 10, 0).unwrap();
        let v = out.certified.unwrap().value.finite().unwrap();
        assert!((v - 1.0 / 1.1).abs() <= 1e-6);
        assert!(out.monte_carlo.is_none());
    }

    #[test]
    fn basis_modes() {
        let input = LcdInput::Basis(vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0]]);
        let p = LcdParams::default();
        let both = run(&input, &p, ModeFlag::Both, 50, 1).unwrap();
        let (c, m) = (both.certified.unwrap(), both.monte_carlo.unwrap());
        assert!(m.value.finite().unwrap() >= c.value.finite().unwrap() - 1e-6);
        assert!(run(&input, &p, ModeFlag::Montecarlo, 50, 1).unwrap().certified.is_none());
        let skew = LcdInput::Basis(vec![vec![1.0, 0.0], vec![1.0, 1.0]]);
        assert!(matches!(run(&skew, &p, ModeFlag::Both, 5, 0), Err(CliError::Config(_))));
    }
}
