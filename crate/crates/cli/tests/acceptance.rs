//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.

use std::fs;
use std::process::{Command, ExitCode};
use std::time::Instant;

use sfl_core::arithmetic::{
    levy_profile, lcd_vector, rademacher_uniform_concentration, ConcentrationOptions, LcdParams, WeightedSum,
};
use sfl_core::deformations::{BKind, DeformationSpec, DimensionConfig, RotationMode, SpectrumSpec};
use sfl_core::ensembles::{sample_matrix, sample_unit_vector, EntryDistribution, SeedSpec};
use sfl_core::experiments::{
    distance_experiment, edge_convergence, random_subspace_incompressibility, reduce_verify, tail_probability,
    ExperimentConfig,
};
use sfl_core::geometry::{build_net, classify, dist_to_sparse, spread_set, verify_covering, Classification, NetMode, SparsityParams};
use sfl_core::reduction::TruncationParams;
use sfl_core::stats::{wilson_interval, Proportion};
use sfl_core::Execution;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// Uniform draws on `[0, 1)` from the library's own streams.
fn uniforms(count: usize, seed: SeedSpec) -> Vec<f64> {
    let s3 = 3f64.sqrt();
    sample_matrix(1, count, &EntryDistribution::UniformScaled, seed).to_row_major().iter().map(|u| (u / s3 + 1.0) / 2.0).collect()
}

fn mp_edges() -> Outcome {
    let mut pass = true;
    let mut detail = Vec::new();
    for (i, dist) in [EntryDistribution::Gaussian, EntryDistribution::Rademacher].iter().enumerate() {
        let r = edge_convergence(400, 100, dist, 200, SeedSpec::new(1001 + i as u64, 0), Execution::default()).unwrap();
        let ok = (0.475..=0.525).contains(&r.s_min_scaled.mean) && (1.425..=1.575).contains(&r.s_max_scaled.mean);
        pass &= ok;
        detail.push(format!("{}: s_n/sqrt(N) = {:.4}, s_1/sqrt(N) = {:.4}", dist.name(), r.s_min_scaled.mean, r.s_max_scaled.mean));
    }
    outcome(pass, detail.join("; "))
}

fn square_linearity() -> Outcome {
    let n = 100;
    let grid = [0.05, 0.1, 0.2, 0.4];
    let cfg = ExperimentConfig::new(DimensionConfig::square(n), EntryDistribution::Gaussian, grid.to_vec(), 10_000, 1002);
    let r = tail_probability(&cfg, Execution::default()).unwrap();
    let scale = (n as f64).sqrt();
    let props: Vec<Proportion> = grid
        .iter()
        .map(|e| Proportion::new(r.trials.iter().filter(|t| t.s_min <= e / scale).count() as u64, r.trials.len() as u64))
        .collect();
    let mut pass = true;
    let mut detail = Vec::new();
    for w in props.windows(2) {
        let ratio = w[1].estimate / w[0].estimate;
        let (lo, hi) = (w[1].ci_lo / w[0].ci_hi, w[1].ci_hi / w[0].ci_lo);
        pass &= (1.5..=2.7).contains(&ratio) && lo <= 2.7 && hi >= 1.5;
        detail.push(format!("{ratio:.3} [{lo:.3}, {hi:.3}]"));
    }
    outcome(pass, format!("ratios {} from hits {:?}", detail.join(", "), props.iter().map(|p| p.hits).collect::<Vec<_>>()))
}

fn deformed_tail() -> Outcome {
    let dims = DimensionConfig::new(180, 200, 260, 1.3, 2.0).unwrap();
    let mut cfg = ExperimentConfig::new(dims, EntryDistribution::Rademacher, vec![0.01], 500, 1003);
    cfg.deformation = DeformationSpec {
        singular_spectrum: SpectrumSpec::Linear { max: 2.0, min: 0.5 },
        rotations: RotationMode::Haar,
        rotation_seed: SeedSpec::new(1003, 1),
        b_norm_target: 200f64.sqrt(),
        b_kind: BKind::RankOne,
    };
    let r = tail_probability(&cfg, Execution::default()).unwrap();
    let p = &r.curve[0];
    outcome(p.hits <= 1, format!("{} hits below {:.4e} in {} trials (min s_n = {:.4})", p.hits, p.threshold, p.trials,
        r.trials.iter().map(|t| t.s_min).fold(f64::INFINITY, f64::min)))
}

fn reduction_identity() -> Outcome {
    let laws = [
        EntryDistribution::LognormalStandardized,
        EntryDistribution::Gaussian,
        EntryDistribution::Rademacher,
        EntryDistribution::UniformScaled,
        EntryDistribution::CenteredExponential,
        EntryDistribution::TwoPointSkewed { p: 0.3 },
    ];
    let kinds = [BKind::Zero, BKind::RankOne, BKind::HaarRotatedDiagonal];
    let mut worst_residual = 0.0f64;
    let mut worst_rel = 0.0f64;
    let mut lognormal = 0;
    for i in 0..50u64 {
        let u = uniforms(8, SeedSpec::new(1004, i));
        let n = 5 + (u[0] * 30.0) as usize;
        let big_n = (n + (u[1] * 20.0) as usize).max(40);
        let big_m = big_n + (u[2] * big_n as f64) as usize;
        let dims = DimensionConfig::new(n, big_n, big_m, 2.0, 2.0).unwrap();
        let law = laws[i as usize % laws.len()];
        lognormal += usize::from(law == EntryDistribution::LognormalStandardized);
        let mut cfg = ExperimentConfig::new(dims, law, vec![1.0], 2, 2000 + i);
        cfg.deformation = DeformationSpec {
            singular_spectrum: SpectrumSpec::Linear { max: 1.0 + u[3], min: 0.5 + 0.5 * u[4] },
            rotations: RotationMode::Haar,
            rotation_seed: SeedSpec::new(3000 + i, 0),
            b_norm_target: u[5] * 2.0 * (big_n as f64).sqrt(),
            b_kind: kinds[i as usize % kinds.len()],
        };
        // Keep the level N^omega / 2 above every atom of the discrete laws.
        let omega_min = 6f64.ln() / (big_n as f64).ln();
        cfg.truncation = Some(TruncationParams { omega: omega_min + (0.49 - omega_min) * u[6], gamma_target: 1.0 });
        let r = reduce_verify(&cfg, Execution::default()).unwrap();
        worst_residual = worst_residual.max(r.max_residual);
        worst_rel = worst_rel.max(r.max_rel_diff);
    }
    outcome(
        worst_residual <= 1e-8 && worst_rel <= 1e-8,
        format!("50 configs ({lognormal} lognormal): max residual {worst_residual:.2e}, max s_n rel diff {worst_rel:.2e}"),
    )
}

fn lcd_golden() -> Outcome {
    let p = LcdParams { alpha: 1.0, gamma: 0.1, grid_tolerance: 1e-6, ..LcdParams::default() };
    let value = |a: &[f64]| lcd_vector(a, &p).unwrap().value.finite().unwrap();
    let e1 = value(&[1.0, 0.0]);
    let s = 0.5f64.sqrt();
    let diag = value(&[s, s]);
    let golden = (e1 - 1.0 / 1.1).abs() <= 1e-6 && (diag - 2f64.sqrt() / 1.1).abs() <= 1e-6;
    let hp = LcdParams { theta_max: Some(1e4), ..p };
    let mut worst = 0.0f64;
    for i in 0..100u64 {
        let u = uniforms(2, SeedSpec::new(1005, i));
        let dim = 1 + (u[0] * 6.0) as usize;
        let c = 0.25 + 3.75 * u[1];
        let a = sample_unit_vector(dim, SeedSpec::new(1005, 1000 + i));
        let ca: Vec<f64> = a.iter().map(|x| c * x).collect();
        let v = lcd_vector(&a, &hp).unwrap().value.finite().unwrap();
        let w = lcd_vector(&ca, &hp).unwrap().value.finite().unwrap();
        worst = worst.max((w - v / c).abs());
    }
    outcome(golden && worst <= 1e-6, format!("e1 -> {e1:.9}, diagonal -> {diag:.9}, homogeneity max error {worst:.2e}"))
}

fn concentration_oracle() -> Outcome {
    let n = 14;
    let sq = (n as f64).sqrt();
    let sampler = WeightedSum { a: vec![1.0 / sq; n], dist: EntryDistribution::Rademacher, seed: SeedSpec::new(1006, 0) };
    let eps: Vec<f64> = [0.25, 0.5, 1.0].iter().map(|e| e / sq).collect();
    let est = levy_profile(&sampler, &eps, 100_000, &ConcentrationOptions::default()).unwrap();
    let mut pass = true;
    let mut detail = Vec::new();
    for (e, c) in eps.iter().zip(&est) {
        let exact = rademacher_uniform_concentration(n, *e);
        let ci = wilson_interval(c.hits, c.trials, 3.0);
        pass &= ci.contains(exact);
        detail.push(format!("{:.4}: exact {exact:.5} in [{:.5}, {:.5}]", e * sq, ci.lo, ci.hi));
    }
    outcome(pass, detail.join("; "))
}

fn distance_law() -> Outcome {
    let dims = DimensionConfig::new(18, 20, 20, 1.0, 1.0).unwrap();
    let mut cfg = ExperimentConfig::new(dims, EntryDistribution::Gaussian, vec![0.1, 0.2, 0.4], 10_000, 1007);
    cfg.m = Some(1);
    let r = distance_experiment(&cfg, Execution::default()).unwrap();
    let chi = ChiSquared::new(r.l as f64).unwrap();
    let mut worst = 0.0f64;
    for prob in [0.1, 0.25, 0.5, 0.75, 0.9] {
        let q = chi.inverse_cdf(prob) / r.l as f64;
        let emp = r.trials.iter().filter(|t| t.dist_sq_over_l <= q).count() as f64 / r.trials.len() as f64;
        worst = worst.max((emp - prob).abs());
    }
    let l = r.l as f64;
    let slope = r.log_slope.unwrap_or(f64::NAN);
    outcome(
        r.l == 3 && worst <= 0.02 && (l - 2.0..=l + 2.0).contains(&slope),
        format!("l = {}, max CDF error {worst:.4}, log-slope {slope:.3}, resampled {}", r.l, r.resampled),
    )
}

fn sphere_suite() -> Outcome {
    // Brute force over all supports of size floor(delta n).
    let mut worst = 0.0f64;
    for i in 0..1000u64 {
        let u = uniforms(3, SeedSpec::new(1008, i));
        let n = 1 + (u[0] * 12.0) as usize;
        let sp = SparsityParams::new(0.05 + 0.95 * u[1], 0.3).unwrap();
        let mut x = sample_unit_vector(n, SeedSpec::new(1008, 10_000 + i));
        if u[2] < 0.3 && n > 1 {
            // Force ties in magnitude.
            x[1] = -x[0];
            let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= nrm);
        }
        let k = sp.sparse_support(n);
        let brute = (0u32..1 << n)
            .filter(|m| m.count_ones() as usize == k)
            .map(|m| (0..n).filter(|j| m & (1 << j) == 0).map(|j| x[j] * x[j]).sum::<f64>().sqrt())
            .fold(f64::INFINITY, f64::min);
        worst = worst.max((dist_to_sparse(&x, &sp).unwrap() - brute).abs());
    }

    let sp = SparsityParams::default();
    let (mut checked, mut violations, mut draws) = (0u64, 0u64, 0u64);
    while checked < 10_000 {
        let n = 20 + (draws % 181) as usize;
        let mut x = sample_unit_vector(n, SeedSpec::new(1009, draws));
        if draws % 3 == 0 {
            // Concentrate mass to probe the boundary region.
            let spike = sp.sparse_support(n).max(1) + 1;
            x.iter_mut().skip(spike).for_each(|v| *v *= 0.15);
            let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            x.iter_mut().for_each(|v| *v /= nrm);
        }
        draws += 1;
        if classify(&x, &sp).unwrap() == Classification::Incompressible {
            checked += 1;
            match spread_set(&x, &sp) {
                Ok(sigma) if sigma.len() as f64 >= sp.spread_floor(n) => {}
                _ => violations += 1,
            }
        }
    }

    let net = build_net(3, 0.5, NetMode::Lattice, SeedSpec::new(1010, 0)).unwrap();
    let cover = verify_covering(&net, 100_000, SeedSpec::new(1010, 1));
    outcome(
        worst <= 1e-12 && violations == 0 && cover.failures == 0 && net.points.len() <= 125,
        format!(
            "brute-force max error {worst:.1e}; {violations} spread-set violations in {checked} incompressible samples; net of {} points, {} of {} probes uncovered (max distance {:.4})",
            net.points.len(),
            cover.failures,
            cover.probes,
            cover.max_distance
        ),
    )
}

fn random_subspaces() -> Outcome {
    let dims = DimensionConfig::new(56, 60, 80, 1.5, 1.0).unwrap();
    let mut cfg = ExperimentConfig::new(dims, EntryDistribution::Gaussian, vec![1.0], 1000, 1011);
    cfg.m = Some(1);
    cfg.deformation = DeformationSpec {
        singular_spectrum: SpectrumSpec::Constant { value: 1.0 },
        rotations: RotationMode::Haar,
        rotation_seed: SeedSpec::new(1011, 1),
        b_norm_target: 0.0,
        b_kind: BKind::Zero,
    };
    let r = random_subspace_incompressibility(&cfg, Execution::default()).unwrap();
    outcome(
        r.l == 5 && r.compressible_hits == 0 && r.lcd.exceeds_ceiling == r.lcd.directions,
        format!(
            "l = {}, dim E = {}, {} compressible of {} (min dist to sparse {:.3}), {}/{} exceed ceiling {:.2}",
            r.l, r.e_dim, r.compressible_hits, r.directions, r.min_dist_to_sparse, r.lcd.exceeds_ceiling, r.lcd.directions, r.lcd.ceiling
        ),
    )
}

fn determinism() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{
  "dims": {"n": 30, "N": 40, "M": 50, "lambda_cap": 1.25, "k0": 2.0},
  "dist": {"kind": "centered_exponential"},
  "deformation": {"singular_spectrum": {"kind": "linear", "max": 2.0, "min": 0.5}, "rotations": "haar",
                  "rotation_seed": {"master_seed": 3}, "b_norm_target": 6.0, "b_kind": "rank_one"},
  "truncation": {"omega": 0.3, "gamma_target": 1.0},
  "epsilon_grid": [0.05, 0.1, 0.5, 1.0],
  "trials": 300,
  "master_seed": 1012
}"#;
    fs::write(tmp.path().join("c.json"), cfg).unwrap();
    let mut lines = Vec::new();
    for workers in ["1", "4"] {
        let out = format!("w{workers}");
        let o = Command::new(env!("CARGO_BIN_EXE_sfl"))
            .current_dir(tmp.path())
            .args(["tail", "--config", "c.json", "--out", &out, "--workers", workers])
            .output()
            .unwrap();
        if !o.status.success() {
            return outcome(false, format!("sfl exited with {:?}: {}", o.status.code(), String::from_utf8_lossy(&o.stderr)));
        }
        let path = String::from_utf8_lossy(&o.stdout).trim().to_string();
        lines.push(fs::read(tmp.path().join(path)).unwrap());
    }
    outcome(lines[0] == lines[1], format!("JSONL records of {} and {} bytes", lines[0].len(), lines[1].len()))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("1 edge asymptotics", mp_edges),
        ("2 square tail linearity", square_linearity),
        ("3 deformed rectangular tail", deformed_tail),
        ("4 reduction identity", reduction_identity),
        ("5 lcd golden values", lcd_golden),
        ("6 concentration oracle", concentration_oracle),
        ("7 distance law", distance_law),
        ("8 sphere decomposition", sphere_suite),
        ("9 random subspace structure", random_subspaces),
        ("10 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let o = check();
        failed += usize::from(!o.pass);
        println!("{} criterion {name} ({:.1}s): {}", if o.pass { "PASS" } else { "FAIL" }, start.elapsed().as_secs_f64(), o.detail);
    }
    println!("acceptance: {} of 10 passed", 10 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
