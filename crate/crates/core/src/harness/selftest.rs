//! A quick oracle and invariant pass over the whole pipeline.

use rand::Rng;

use crate::capacity::{cap_exact, cap_lower_bound, cap_upper_bound};
use crate::forest::{build_forest_by_vertices, sample_conditioned_tree};
use crate::green::{c_d_eta, GreenEvaluator};
use crate::lattice::{LatticePoints, LatticeStepDistribution};
use crate::offspring::OffspringDistribution;
use crate::seed::rng_from_seed;
use crate::tree_walk::{assign_positions, range_accounting};

#[derive(Debug, Clone)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> Check {
    Check {
        name,
        passed,
        detail,
    }
}

/// Runs every check; never panics on a failed check.
pub fn run_selftest() -> Vec<Check> {
    let mut out = Vec::new();

    // Watson's integral: the simple walk on Z³ has G(0) = 1.5163860591519...,
    // and holding with probability ½ doubles every Green value.
    let eta = LatticeStepDistribution::lazy_srw(3, 0.5).unwrap();
    let ev = GreenEvaluator::new(eta).unwrap();
    let g0 = ev.green_exact(&[0, 0, 0]).unwrap() / 2.0;
    out.push(check(
        "green-origin",
        (g0 - 1.516_386_059_151_978).abs() < 1e-9,
        format!("G_srw(0) = {g0:.15}"),
    ));

    let worst = [[0, 0, 0], [1, 0, 0], [2, 1, 0], [3, 2, 1], [5, 0, 4]]
        .iter()
        .map(|x| ev.harmonicity_residual(x).unwrap().abs())
        .fold(0.0, f64::max);
    out.push(check(
        "green-harmonic",
        worst < 1e-8,
        format!("max residual {worst:.2e}"),
    ));

    let c_expected = 1.0 / (2.0 * std::f64::consts::PI);
    let c = c_d_eta(3, 1.0);
    out.push(check(
        "green-constant",
        (c - c_expected).abs() < 1e-12,
        format!("C(3, I) = {c:.15}"),
    ));

    let single = LatticePoints::from_flat(3, vec![0, 0, 0]).unwrap();
    let cap1 = cap_exact(&single, &ev).unwrap().value;
    let g0 = ev.green(&[0, 0, 0]);
    out.push(check(
        "cap-singleton",
        (cap1 - 1.0 / g0).abs() < 1e-9,
        format!("{cap1} vs {}", 1.0 / g0),
    ));

    let pair = LatticePoints::from_flat(3, vec![0, 0, 0, 2, 1, 0]).unwrap();
    let cap2 = cap_exact(&pair, &ev).unwrap().value;
    let expect = 2.0 / (g0 + ev.green(&[2, 1, 0]));
    out.push(check(
        "cap-two-point",
        (cap2 - expect).abs() < 1e-9,
        format!("{cap2} vs {expect}"),
    ));

    let mut rng = rng_from_seed(2024);
    let mut violations = 0;
    for _ in 0..10 {
        let mut a = LatticePoints::new(3);
        for _ in 0..60 {
            a.push(&[
                rng.random_range(-6..=6),
                rng.random_range(-6..=6),
                rng.random_range(-6..=6),
            ]);
        }
        let lo = cap_lower_bound(&a, &ev, None).unwrap().value;
        let ex = cap_exact(&a, &ev).unwrap().value;
        let hi = cap_upper_bound(&a, &ev).unwrap().value;
        if !(lo <= ex * (1.0 + 1e-6) && ex <= hi * (1.0 + 1e-6)) {
            violations += 1;
        }
    }
    out.push(check(
        "cap-sandwich",
        violations == 0,
        format!("{violations} violations in 10 sets"),
    ));

    let mu = OffspringDistribution::geometric(0.5).unwrap();
    let theta = LatticeStepDistribution::srw(3).unwrap();
    let mut bad = 0;
    for _ in 0..20 {
        let n = 400;
        let f = build_forest_by_vertices(&mu, n, &mut rng).unwrap();
        let hs = f.height_and_spine_stats(n).unwrap();
        if f.depth(n) != hs.zeta + hs.heights[n] {
            bad += 1;
        }
        let pf = assign_positions(&f, &theta, &mut rng).unwrap();
        let acc = range_accounting(&pf, &[n]).unwrap()[0];
        let n1 = (n + 1) as u64;
        if n1 * n1 > acc.range_size as u64 * acc.sum_l2 || acc.range_size as u64 > n1 {
            bad += 1;
        }
    }
    out.push(check(
        "tree-identities",
        bad == 0,
        format!("{bad} failures in 20 forests"),
    ));

    let mut sizes_ok = true;
    for n in [1usize, 2, 17, 100] {
        match sample_conditioned_tree(&mu, n, &mut rng) {
            Ok(t) => sizes_ok &= t.num_vertices() == n && t.num_subtrees() == 1,
            Err(_) => sizes_ok = false,
        }
    }
    out.push(check(
        "conditioned-size",
        sizes_ok,
        "n ∈ {1, 2, 17, 100}".into(),
    ));
    out
}

#[cfg(test)]
mod tests {
    #[test]
    fn all_checks_pass() {
        for c in super::run_selftest() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
