//! Sphere decomposition: compressible and incompressible vectors, spread
//! sets, totally spread windows, epsilon-nets and random coordinate subsets.

use rand_core::RngCore;
use serde::{Deserialize, Serialize};

use crate::ensembles::{sample_unit_vector_in, Lane, SeedSpec};
use crate::error::{Error, Result};
use crate::linalg::norm2;
use crate::stats::Proportion;

const UNIT_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparsityParams {
    pub delta: f64,
    pub rho: f64,
}

impl Default for SparsityParams {
    fn default() -> Self {
        SparsityParams { delta: 0.1, rho: 0.3 }
    }
}

impl SparsityParams {
    pub fn new(delta: f64, rho: f64) -> Result<Self> {
        let sp = SparsityParams { delta, rho };
        sp.validate()?;
        Ok(sp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0 && self.delta <= 1.0) || !(self.rho > 0.0 && self.rho <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "sparsity parameters delta = {}, rho = {} must lie in (0, 1]",
                self.delta, self.rho
            )));
        }
        Ok(())
    }

    /// `floor(delta n)`, the support size of sparse vectors.
    pub fn sparse_support(&self, n: usize) -> usize {
        (self.delta * n as f64 + 1e-9).floor() as usize
    }

    /// `ceil(delta n)`.
    pub fn ceil_support(&self, n: usize) -> usize {
        (self.delta * n as f64 - 1e-9).ceil() as usize
    }

    /// Lower bound `rho^2 delta n / 2` on the size of a spread set.
    pub fn spread_floor(&self, n: usize) -> f64 {
        self.rho * self.rho * self.delta * n as f64 / 2.0
    }
}

fn check_unit(x: &[f64]) -> Result<()> {
    let nrm = norm2(x);
    if x.is_empty() || (nrm - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidParameter(format!("expected a unit vector, got norm {nrm}")));
    }
    Ok(())
}

/// Indices sorted by decreasing magnitude, ties by lowest index.
fn by_magnitude(x: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[b].abs().total_cmp(&x[a].abs()).then(a.cmp(&b)));
    idx
}

/// Distance from unit `x` to the set of `floor(delta n)`-sparse vectors:
/// the norm of `x` outside its largest coordinates.
pub fn dist_to_sparse(x: &[f64], sp: &SparsityParams) -> Result<f64> {
    check_unit(x)?;
    let k = sp.sparse_support(x.len());
    let order = by_magnitude(x);
    Ok(order[k.min(x.len())..].iter().map(|&i| x[i] * x[i]).sum::<f64>().sqrt())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    Compressible,
    Incompressible,
}

/// Distance exactly `rho` counts as compressible.
pub fn classify(x: &[f64], sp: &SparsityParams) -> Result<Classification> {
    Ok(if dist_to_sparse(x, sp)? <= sp.rho {
        Classification::Compressible
    } else {
        Classification::Incompressible
    })
}

fn in_spread_window(v: f64, n: usize, sp: &SparsityParams) -> bool {
    let a = v.abs();
    sp.rho / (2.0 * n as f64).sqrt() <= a && a <= 1.0 / (sp.delta * n as f64).sqrt()
}

/// `{k : rho / sqrt(2n) <= |x_k| <= 1 / sqrt(delta n)}` for incompressible `x`.
pub fn spread_set(x: &[f64], sp: &SparsityParams) -> Result<Vec<usize>> {
    if classify(x, sp)? != Classification::Incompressible {
        return Err(Error::InvalidParameter("spread set requested for a compressible vector".into()));
    }
    let n = x.len();
    let sigma: Vec<usize> = (0..n).filter(|&k| in_spread_window(x[k], n, sp)).collect();
    if (sigma.len() as f64) < sp.spread_floor(n) {
        return Err(Error::Numerical(format!(
            "spread set of size {} below the guaranteed {}",
            sigma.len(),
            sp.spread_floor(n)
        )));
    }
    Ok(sigma)
}

/// `min{d, floor(rho^2 delta n / 2)}`.
pub fn spread_window_size(n: usize, d: usize, sp: &SparsityParams) -> usize {
    d.min((sp.spread_floor(n) + 1e-9).floor() as usize)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpreadWindow {
    pub m: usize,
    pub j_set: Vec<usize>,
    pub k1: f64,
    pub k2: f64,
}

impl SpreadWindow {
    pub fn new(mut j_set: Vec<usize>, sp: &SparsityParams) -> Result<Self> {
        j_set.sort_unstable();
        j_set.dedup();
        if j_set.is_empty() {
            return Err(Error::InvalidParameter("empty coordinate set".into()));
        }
        let k1 = sp.rho * (sp.delta / 2.0).sqrt();
        Ok(SpreadWindow { m: j_set.len(), j_set, k1, k2: 1.0 / k1 })
    }

    pub fn lower(&self) -> f64 {
        self.k1 / (self.m as f64).sqrt()
    }

    pub fn upper(&self) -> f64 {
        self.k2 / (self.m as f64).sqrt()
    }
}

/// Whether `y` lies in `S^J`: zero off `J`, and `K1/sqrt(m) <= |y_k| <= K2/sqrt(m)` on `J`.
pub fn totally_spread_membership(y: &[f64], sw: &SpreadWindow) -> bool {
    let (lo, hi) = (sw.lower(), sw.upper());
    let mut on_j = vec![false; y.len()];
    for &k in &sw.j_set {
        match y.get(k) {
            Some(v) if lo <= v.abs() && v.abs() <= hi => on_j[k] = true,
            _ => return false,
        }
    }
    y.iter().zip(&on_j).all(|(v, &inside)| inside || *v == 0.0)
}

/// The event that `P_J x / |P_J x|` is totally spread and
/// `rho sqrt(m / 2n) <= |P_J x| <= sqrt(m / (delta n))`.
pub fn subset_event(x: &[f64], j_set: &[usize], sp: &SparsityParams) -> Result<bool> {
    let sw = SpreadWindow::new(j_set.to_vec(), sp)?;
    let n = x.len() as f64;
    let m = sw.m as f64;
    let mut pj = vec![0.0; x.len()];
    for &k in &sw.j_set {
        if k >= x.len() {
            return Err(Error::Dimension(format!("index {k} outside R^{}", x.len())));
        }
        pj[k] = x[k];
    }
    let nrm = norm2(&pj);
    if nrm == 0.0 {
        return Ok(false);
    }
    let within = sp.rho * (m / (2.0 * n)).sqrt() <= nrm && nrm <= (m / (sp.delta * n)).sqrt();
    pj.iter_mut().for_each(|v| *v /= nrm);
    Ok(within && totally_spread_membership(&pj, &sw))
}

/// Uniform `m`-subset of `0..n`, sorted.
pub fn random_subset<R: RngCore>(n: usize, m: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..m.min(n) {
        let span = (n - i) as u64;
        let j = i + (rng.next_u64() % span) as usize;
        idx.swap(i, j);
    }
    let mut out = idx[..m.min(n)].to_vec();
    out.sort_unstable();
    out
}

/// Monte Carlo rate of [`subset_event`] over uniform `m`-subsets.
pub fn random_subset_event_rate(
    x: &[f64],
    sp: &SparsityParams,
    m: usize,
    trials: u64,
    seed: SeedSpec,
) -> Result<Proportion> {
    if classify(x, sp)? != Classification::Incompressible {
        return Err(Error::InvalidParameter("subset event rate requires an incompressible vector".into()));
    }
    if m == 0 || m > x.len() {
        return Err(Error::InvalidParameter(format!("subset size {m} outside 1..={}", x.len())));
    }
    let mut hits = 0;
    for t in 0..trials {
        let mut rng = seed.trial(t).rng_in(Lane::Subset);
        let j = random_subset(x.len(), m, &mut rng);
        if subset_event(x, &j, sp)? {
            hits += 1;
        }
    }
    Ok(Proportion::with_z(hits, trials, 3.0))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NetMode {
    GreedyRandom,
    Lattice,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonNet {
    pub dim: usize,
    pub epsilon: f64,
    pub points: Vec<Vec<f64>>,
    pub cardinality_bound: f64,
    pub mode: NetMode,
}

/// `min{(1 + 2/eps)^n, 2n (1 + 2/eps)^(n-1)}`.
pub fn net_cardinality_bound(n: usize, epsilon: f64) -> f64 {
    let r = 1.0 + 2.0 / epsilon;
    r.powi(n as i32).min(2.0 * n as f64 * r.powi(n as i32 - 1))
}

pub const MAX_CERTIFIED_NET_DIM: usize = 8;
pub const COVERING_PROBES: u64 = 100_000;

fn nearest_distance(points: &[Vec<f64>], x: &[f64]) -> f64 {
    points
        .iter()
        .map(|p| p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .fold(f64::INFINITY, f64::min)
        .sqrt()
}

fn greedy_net(n: usize, epsilon: f64, seed: SeedSpec) -> Vec<Vec<f64>> {
    // Each accepted probe is farther than eps from every kept point, so the
    // kept set stays eps-separated; stop after a full pass accepts nothing.
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut pass = 0u64;
    loop {
        let mut added = false;
        for i in 0..COVERING_PROBES {
            let x = sample_unit_vector_in(n, seed.trial(pass * COVERING_PROBES + i), Lane::Probe);
            if nearest_distance(&points, &x) > epsilon {
                points.push(x);
                added = true;
            }
        }
        if !added {
            return points;
        }
        pass += 1;
    }
}

fn lattice_net(n: usize, epsilon: f64) -> Result<Vec<Vec<f64>>> {
    // Grid on the surface of [-1, 1]^n pushed radially to the sphere; the
    // radial map is 1-Lipschitz outside the ball.
    let k = if n == 1 {
        1
    } else {
        let h = 2.0 * epsilon / ((n - 1) as f64).sqrt();
        ((2.0 / h) - 1e-12).ceil().max(1.0) as usize
    };
    let total = (k as f64 + 1.0).powi(n as i32);
    if total > 1e7 {
        return Err(Error::NetConstruction(format!("lattice with {total} nodes is too large")));
    }
    let step = 2.0 / k as f64;
    let mut points = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        if idx.iter().any(|&i| i == 0 || i == k) {
            let mut p: Vec<f64> = idx.iter().map(|&i| -1.0 + step * i as f64).collect();
            let nrm = norm2(&p);
            p.iter_mut().for_each(|v| *v /= nrm);
            points.push(p);
        }
        let mut c = 0;
        loop {
            if c == n {
                return Ok(points);
            }
            idx[c] += 1;
            if idx[c] <= k {
                break;
            }
            idx[c] = 0;
            c += 1;
        }
    }
}

pub fn build_net(n: usize, epsilon: f64, mode: NetMode, seed: SeedSpec) -> Result<EpsilonNet> {
    if n == 0 || n > MAX_CERTIFIED_NET_DIM {
        return Err(Error::NetConstruction(format!("dimension {n} outside 1..={MAX_CERTIFIED_NET_DIM}")));
    }
    if !(epsilon > 0.0 && epsilon <= 1.0) {
        return Err(Error::InvalidParameter(format!("net radius {epsilon} outside (0, 1]")));
    }
    let points = match mode {
        NetMode::GreedyRandom => greedy_net(n, epsilon, seed),
        NetMode::Lattice => lattice_net(n, epsilon)?,
    };
    let bound = net_cardinality_bound(n, epsilon);
    if points.len() as f64 > bound {
        return Err(Error::NetConstruction(format!("{} points exceed the bound {bound}", points.len())));
    }
    Ok(EpsilonNet { dim: n, epsilon, points, cardinality_bound: bound, mode })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoveringReport {
    pub probes: u64,
    pub failures: u64,
    pub max_distance: f64,
}

/// Uniform sphere probes, each checked for a net point within `epsilon`.
/// Probes use a lane disjoint from the greedy construction.
pub fn verify_covering(net: &EpsilonNet, probes: u64, seed: SeedSpec) -> CoveringReport {
    let mut failures = 0;
    let mut max_distance = 0.0f64;
    for i in 0..probes {
        let x = sample_unit_vector_in(net.dim, seed.trial(i), Lane::Direction);
        let d = nearest_distance(&net.points, &x);
        max_distance = max_distance.max(d);
        if d > net.epsilon {
            failures += 1;
        }
    }
    CoveringReport { probes, failures, max_distance }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensembles::sample_unit_vector;
    use proptest::prelude::*;

    fn normalize(mut x: Vec<f64>) -> Vec<f64> {
        let n = norm2(&x);
        x.iter_mut().for_each(|v| *v /= n);
        x
    }

    fn brute_force(x: &[f64], k: usize) -> f64 {
        let n = x.len();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << n) {
            if mask.count_ones() as usize != k {
                continue;
            }
            let rest: f64 = (0..n).filter(|i| mask & (1 << i) == 0).map(|i| x[i] * x[i]).sum();
            best = best.min(rest.sqrt());
        }
        best
    }

    #[test]
    fn sparse_distance_examples() {
        let sp = SparsityParams::new(0.5, 0.3).unwrap();
        assert_eq!(dist_to_sparse(&[1.0, 0.0, 0.0, 0.0], &sp).unwrap(), 0.0);
        let n = 10;
        let u = vec![1.0 / (n as f64).sqrt(); n];
        let sp = SparsityParams::new(0.25, 0.3).unwrap();
        let expected = ((n - 2) as f64 / n as f64).sqrt();
        assert!((dist_to_sparse(&u, &sp).unwrap() - expected).abs() < 1e-12);
        let x = normalize(vec![0.8, 0.5, 0.3, 0.1414]);
        let sp = SparsityParams::new(0.5, 0.3).unwrap();
        let d = dist_to_sparse(&x, &sp).unwrap();
        assert!((d - (x[2] * x[2] + x[3] * x[3]).sqrt()).abs() < 1e-15);
        assert!((d - brute_force(&x, 2)).abs() < 1e-12);
        // floor(delta n) = 0 keeps nothing.
        let sp = SparsityParams::new(0.1, 0.3).unwrap();
        assert!((dist_to_sparse(&normalize(vec![3.0, 4.0]), &sp).unwrap() - 1.0).abs() < 1e-12);
        assert!(dist_to_sparse(&[0.5, 0.5], &sp).is_err());
    }

    #[test]
    fn sparse_distance_matches_brute_force() {
        for case in 0..300u64 {
            let n = 1 + (case % 12) as usize;
            let x = sample_unit_vector(n, SeedSpec::new(case, 3));
            let sp = SparsityParams::new(0.05 + 0.9 * ((case * 37) % 100) as f64 / 100.0, 0.3).unwrap();
            let k = sp.sparse_support(n);
            assert!((dist_to_sparse(&x, &sp).unwrap() - brute_force(&x, k)).abs() <= 1e-12);
        }
    }

    #[test]
    fn classification_examples() {
        let sp = SparsityParams::new(0.1, 0.3).unwrap();
        let mut e1 = vec![0.0; 100];
        e1[0] = 1.0;
        assert_eq!(classify(&e1, &sp).unwrap(), Classification::Compressible);
        let u = vec![0.1; 100];
        assert!((dist_to_sparse(&u, &sp).unwrap() - 0.9f64.sqrt()).abs() < 1e-12);
        assert_eq!(classify(&u, &sp).unwrap(), Classification::Incompressible);
        // dist exactly rho.
        let sp = SparsityParams::new(0.5, 0.5).unwrap();
        let x = [0.75f64.sqrt(), 0.5];
        assert_eq!(dist_to_sparse(&x, &sp).unwrap(), 0.5);
        assert_eq!(classify(&x, &sp).unwrap(), Classification::Compressible);
    }

    #[test]
    fn spread_set_examples() {
        let sp = SparsityParams::default();
        let u = vec![0.1; 100];
        assert_eq!(spread_set(&u, &sp).unwrap(), (0..100).collect::<Vec<_>>());
        let mut x = vec![1.0; 100];
        x[7] = 8.0;
        let x = normalize(x);
        assert!(x[7] > 1.0 / 10f64.sqrt());
        let sigma = spread_set(&x, &sp).unwrap();
        assert!(!sigma.contains(&7) && sigma.len() == 99);
        let mut e1 = vec![0.0; 100];
        e1[0] = 1.0;
        assert!(spread_set(&e1, &sp).is_err());
    }

    #[test]
    fn spread_bound_on_random_incompressible_vectors() {
        let sp = SparsityParams::default();
        let mut checked = 0;
        for t in 0..10_000u64 {
            let n = 20 + (t % 60) as usize;
            let mut x = sample_unit_vector(n, SeedSpec::new(11, t));
            // Skew some samples toward sparsity.
            let power = 1 + (t % 4) as i32;
            x.iter_mut().for_each(|v| *v = v.signum() * v.abs().powi(power));
            let x = normalize(x);
            if classify(&x, &sp).unwrap() == Classification::Incompressible {
                let sigma = spread_set(&x, &sp).unwrap();
                assert!(sigma.len() as f64 >= sp.spread_floor(n));
                checked += 1;
            }
        }
        assert!(checked > 5_000);
    }

    #[test]
    fn totally_spread_examples() {
        let sp = SparsityParams::default();
        let sw = SpreadWindow::new(vec![1, 3, 5], &sp).unwrap();
        assert!((sw.k1 * sw.k2 - 1.0).abs() < 1e-15);
        let mut y = vec![0.0; 6];
        for &k in &sw.j_set {
            y[k] = 1.0 / 3f64.sqrt();
        }
        assert!(totally_spread_membership(&y, &sw));
        let mut e = vec![0.0; 6];
        e[3] = 1.0;
        assert!(!totally_spread_membership(&e, &sw));
        y[0] = 1e-3;
        assert!(!totally_spread_membership(&y, &sw));
    }

    #[test]
    fn subsets_of_spread_set_satisfy_event() {
        let sp = SparsityParams::default();
        for t in 0..200u64 {
            let x = sample_unit_vector(120, SeedSpec::new(12, t));
            let sigma = spread_set(&x, &sp).unwrap();
            let mut rng = SeedSpec::new(13, t).rng();
            let pick = random_subset(sigma.len(), 2, &mut rng);
            let j: Vec<usize> = pick.iter().map(|&i| sigma[i]).collect();
            assert!(subset_event(&x, &j, &sp).unwrap());
        }
    }

    #[test]
    fn window_size_follows_floor() {
        let sp = SparsityParams::new(0.5, 0.5).unwrap();
        assert_eq!(spread_window_size(40, 100, &sp), 2);
        assert_eq!(spread_window_size(40, 1, &sp), 1);
        assert_eq!(spread_window_size(100, 10, &SparsityParams::default()), 0);
    }

    #[test]
    fn uniform_vector_event_rate_is_one() {
        let sp = SparsityParams::default();
        let u = vec![0.1; 100];
        for m in [1, 3, 100] {
            let r = random_subset_event_rate(&u, &sp, m, 500, SeedSpec::new(1, 0)).unwrap();
            assert_eq!(r.hits, 500);
        }
    }

    #[test]
    fn adversarial_event_rate_is_hypergeometric() {
        let sp = SparsityParams::new(0.25, 0.5).unwrap();
        let n = 40;
        let mut x = vec![0.0; n];
        for v in x.iter_mut().take(20) {
            *v = 1.0 / 20f64.sqrt();
        }
        assert_eq!(spread_set(&x, &sp).unwrap().len(), 20);
        for m in [1usize, 2, 3] {
            let exact: f64 = (0..m).map(|i| (20 - i) as f64 / (n - i) as f64).product();
            let r = random_subset_event_rate(&x, &sp, m, 20_000, SeedSpec::new(5, 0)).unwrap();
            assert!(r.interval().contains(exact), "m = {m}: {exact} not in {:?}", r.interval());
        }
    }

    #[test]
    fn bound_values() {
        assert_eq!(net_cardinality_bound(3, 0.5), 125.0);
        assert_eq!(net_cardinality_bound(2, 0.2), 44.0);
        assert_eq!(net_cardinality_bound(1, 0.5), 2.0);
    }

    #[test]
    fn nets_cover_the_sphere() {
        let n1 = build_net(1, 0.5, NetMode::GreedyRandom, SeedSpec::new(1, 0)).unwrap();
        assert_eq!(n1.points.len(), 2);
        let lat = build_net(1, 0.5, NetMode::Lattice, SeedSpec::new(1, 0)).unwrap();
        assert_eq!(lat.points, vec![vec![-1.0], vec![1.0]]);

        let lat3 = build_net(3, 0.5, NetMode::Lattice, SeedSpec::new(0, 0)).unwrap();
        assert_eq!(lat3.points.len(), 56);
        let greedy3 = build_net(3, 0.5, NetMode::GreedyRandom, SeedSpec::new(2, 0)).unwrap();
        assert!(greedy3.points.len() <= 125);
        for net in [&lat3, &greedy3] {
            assert!(net.points.iter().all(|p| (norm2(p) - 1.0).abs() < 1e-12));
            let report = verify_covering(net, COVERING_PROBES, SeedSpec::new(3, 0));
            assert_eq!(report.failures, 0);
        }

        let lat2 = build_net(2, 0.2, NetMode::Lattice, SeedSpec::new(0, 0)).unwrap();
        assert!(lat2.points.len() <= 44);
        assert_eq!(verify_covering(&lat2, 20_000, SeedSpec::new(4, 0)).failures, 0);
        assert!(build_net(9, 0.5, NetMode::Lattice, SeedSpec::new(0, 0)).is_err());
    }

    proptest! {
        #[test]
        fn classification_ignores_permutation_and_signs(seed in 0u64..1000, flips in any::<u32>(), rot in 0usize..30) {
            let sp = SparsityParams::default();
            let x = sample_unit_vector(30, SeedSpec::new(seed, 8));
            let mut y: Vec<f64> = x.iter().enumerate().map(|(i, v)| if flips & (1 << i) != 0 { -v } else { *v }).collect();
            y.rotate_left(rot);
            prop_assert_eq!(classify(&x, &sp).unwrap(), classify(&y, &sp).unwrap());
            prop_assert!((dist_to_sparse(&x, &sp).unwrap() - dist_to_sparse(&y, &sp).unwrap()).abs() < 1e-12);
        }
    }
}
