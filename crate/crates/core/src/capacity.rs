//! Capacity of finite lattice sets: exact solve, Monte Carlo escape, and
//! the two Green-sum bounds.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::green::GreenEvaluator;
use crate::lattice::{pack_key, LatticePoints, LatticeStepDistribution, MAX_DIM};
use crate::linalg::{solve_general, solve_spd, SolveError};
use crate::seed::{derive_seed, rng_from_seed};

pub const DEFAULT_SOLVE_CEILING: usize = 4000;
pub const DEFAULT_CONDITION_LIMIT: f64 = 1e12;
pub const DEFAULT_PAIR_CEILING: usize = 20_000;

#[derive(Debug, Error)]
pub enum CapacityError {
    #[error("empty point set")]
    Empty,
    #[error("{size} distinct points exceed the solve ceiling {ceiling}")]
    TooLarge { size: usize, ceiling: usize },
    #[error("Green matrix solve failed: {0}")]
    Solve(#[from] SolveError),
    #[error(
        "escape probability {value} at point {index} outside [0, 1]; Green values are inconsistent"
    )]
    EscapeOutOfRange { index: usize, value: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CapacityMethod {
    ExactSolve,
    MonteCarlo,
    LowerBound,
    UpperBound,
}

impl CapacityMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            CapacityMethod::ExactSolve => "exact-solve",
            CapacityMethod::MonteCarlo => "monte-carlo",
            CapacityMethod::LowerBound => "lower-bound",
            CapacityMethod::UpperBound => "upper-bound",
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CapacityParams {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub walkers: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sources: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rho: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub exit_radius: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub condition: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stat_error: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bias: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub green_sum: Option<f64>,
    /// Value rests on sampling (sampled Green sum, subsampled rows).
    pub estimated: bool,
    /// Walker step budget was exhausted somewhere.
    pub partial: bool,
    /// Lower bound came out negative.
    pub negative: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapacityResult {
    pub value: f64,
    pub method: CapacityMethod,
    /// Absolute tolerance (exact), 1σ plus bias (Monte Carlo), or the
    /// sampling uncertainty of an estimated bound.
    pub error: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub escape_probs: Option<Vec<f64>>,
    pub params: CapacityParams,
}

impl CapacityResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data")
    }

    /// `value,method,error,k,walkers,sources,rho,estimated` record.
    pub fn write_csv<W: Write>(&self, out: W, header: bool) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if header {
            w.write_record([
                "value",
                "method",
                "error",
                "k",
                "walkers",
                "sources",
                "rho",
                "estimated",
            ])?;
        }
        let opt = |v: Option<String>| v.unwrap_or_default();
        w.write_record([
            format!("{}", self.value),
            self.method.as_str().to_string(),
            format!("{}", self.error),
            opt(self.params.k.map(|v| v.to_string())),
            opt(self.params.walkers.map(|v| v.to_string())),
            opt(self.params.sources.map(|v| v.to_string())),
            opt(self.params.rho.map(|v| v.to_string())),
            self.params.estimated.to_string(),
        ])?;
        w.flush()?;
        Ok(())
    }
}

/// Distinct points with their multiplicities, in first-occurrence order.
pub fn with_multiplicity(seq: &LatticePoints) -> (LatticePoints, Vec<u64>) {
    let mut index: FxHashMap<u128, usize> = FxHashMap::default();
    let mut pts = LatticePoints::new(seq.dim());
    let mut mult = Vec::new();
    for p in seq.iter() {
        let next = mult.len();
        let i = *index.entry(pack_key(p)).or_insert(next);
        if i == next {
            pts.push(p);
            mult.push(0);
        }
        mult[i] += 1;
    }
    (pts, mult)
}

pub fn green_matrix(a: &LatticePoints, ev: &GreenEvaluator) -> DMatrix<f64> {
    let m = a.len();
    let symmetric = ev.dist().is_symmetric();
    let rows: Vec<Vec<f64>> = (0..m)
        .into_par_iter()
        .map(|i| {
            let lo = if symmetric { i } else { 0 };
            (lo..m)
                .map(|j| ev.green_between(a.get(i), a.get(j)))
                .collect()
        })
        .collect();
    let mut g = DMatrix::zeros(m, m);
    for (i, row) in rows.into_iter().enumerate() {
        let lo = if symmetric { i } else { 0 };
        for (off, v) in row.into_iter().enumerate() {
            let j = lo + off;
            g[(i, j)] = v;
            if symmetric {
                g[(j, i)] = v;
            }
        }
    }
    g
}

#[derive(Debug, Clone, Copy)]
pub struct ExactOptions {
    pub ceiling: usize,
    pub condition_limit: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            ceiling: DEFAULT_SOLVE_CEILING,
            condition_limit: DEFAULT_CONDITION_LIMIT,
        }
    }
}

/// Solves Σ_x G(z, x) e(x) = 1 on the distinct points of `a`; cap = Σ e.
/// Escape probabilities are reported for the deduplicated set.
pub fn cap_exact(a: &LatticePoints, ev: &GreenEvaluator) -> Result<CapacityResult, CapacityError> {
    cap_exact_with(a, ev, ExactOptions::default())
}

pub fn cap_exact_with(
    a: &LatticePoints,
    ev: &GreenEvaluator,
    opts: ExactOptions,
) -> Result<CapacityResult, CapacityError> {
    if a.is_empty() {
        return Err(CapacityError::Empty);
    }
    let a = a.dedup();
    let m = a.len();
    if m > opts.ceiling {
        return Err(CapacityError::TooLarge {
            size: m,
            ceiling: opts.ceiling,
        });
    }
    let g = green_matrix(&a, ev);
    let ones = DVector::from_element(m, 1.0);
    let sol = if ev.dist().is_symmetric() {
        solve_spd(&g, &ones, opts.condition_limit)?
    } else {
        solve_general(&g, &ones, opts.condition_limit)?
    };
    // Interior points have e = 0 exactly, so entry errors in G land on both
    // sides: ‖δe‖∞ ≤ ‖G⁻¹‖ (‖r‖∞ + ‖δG‖∞) with |δG_ij| ≤ tol + jump·G_ij.
    let jump = ev.crossover_jump();
    let jump = if jump.is_finite() { jump } else { 0.0 };
    let g_norm = g.row_iter().map(|r| r.sum()).fold(0.0, f64::max);
    let delta_g = m as f64 * ev.tolerance() + jump * g_norm;
    let tol = (2.0 * sol.inverse_norm * (sol.residual + delta_g)).max(1e-9);
    for (i, &e) in sol.x.iter().enumerate() {
        if !(-tol..=1.0 + tol).contains(&e) {
            return Err(CapacityError::EscapeOutOfRange { index: i, value: e });
        }
    }
    let value = sol.x.sum();
    // |Σ(e − e*)| ≤ m ‖G⁻¹‖ ‖r‖∞
    let error = m as f64 * sol.inverse_norm * sol.residual;
    Ok(CapacityResult {
        value,
        method: CapacityMethod::ExactSolve,
        error,
        escape_probs: Some(sol.x.iter().copied().collect()),
        params: CapacityParams {
            residual: Some(sol.residual),
            condition: Some(sol.condition),
            ..Default::default()
        },
    })
}

#[derive(Debug, Clone, Copy)]
pub struct MonteCarloOptions {
    /// Walkers per source point.
    pub walkers: usize,
    /// Exit radius is ρ·(diam(A) + 1) around the centroid.
    pub rho: f64,
    /// Step budget per source point.
    pub step_budget: u64,
    /// Launch from this many uniformly chosen points instead of all.
    pub sources: Option<usize>,
    pub seed: u64,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        Self {
            walkers: 64,
            rho: 4.0,
            step_budget: 10_000_000,
            sources: None,
            seed: 0,
        }
    }
}

#[derive(Default, Clone, Copy)]
struct SourceTally {
    escapes: u64,
    // Σ over escaping walkers of G(exit − centre) and its square.
    g: f64,
    g2: f64,
    partial: bool,
}

/// Escape-probability Monte Carlo.
///
/// Walkers run until they return to A or leave the exit ball. A walker
/// leaving at z still hits A later with probability h(z) = Σ_y G(z, y) e(y);
/// with z far away h(z) ≈ cap · G(z − c), so counting each exit with weight
/// 1 − cap · G(z − c) and solving for cap gives cap = S₁ / (1 + S₂), where
/// S₁ sums exit frequencies and S₂ sums exit-weighted Green values. The
/// reported error is 1σ (delta method) plus a bound on the error of that
/// far-field approximation.
pub fn cap_monte_carlo(
    a: &LatticePoints,
    eta: &LatticeStepDistribution,
    ev: &GreenEvaluator,
    opts: MonteCarloOptions,
) -> Result<CapacityResult, CapacityError> {
    if a.is_empty() {
        return Err(CapacityError::Empty);
    }
    if opts.rho < 2.0 || opts.walkers == 0 {
        return Err(CapacityError::InvalidArgument(
            "need ρ ≥ 2 and at least one walker".into(),
        ));
    }
    let a = a.dedup();
    let m = a.len();
    let d = a.dim();
    let members: FxHashSet<u128> = a.iter().map(pack_key).collect();
    let centroid = a.centroid();
    let centre: Vec<i32> = centroid.iter().map(|c| c.round() as i32).collect();
    let r_a = a
        .iter()
        .map(|p| {
            p.iter()
                .zip(&centroid)
                .map(|(&x, c)| (x as f64 - c).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .fold(0.0, f64::max);
    let diam = if m <= 5000 {
        a.diameter()
    } else {
        a.diameter_bound()
    };
    let exit_r = opts.rho * (diam + 1.0);
    let exit_r2 = exit_r * exit_r;
    let inner_r2 = (r_a + 1.0).powi(2);

    let chosen: Vec<usize> = match opts.sources {
        Some(k) if k < m => {
            let mut rng = rng_from_seed(derive_seed(opts.seed, &[u64::MAX]));
            let mut idx = sample_indices(&mut rng, m, k).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..m).collect(),
    };
    let k = chosen.len();

    let tallies: Vec<SourceTally> = chosen
        .par_iter()
        .map(|&src| {
            let mut rng = rng_from_seed(derive_seed(opts.seed, &[src as u64]));
            let mut t = SourceTally::default();
            let mut steps = 0u64;
            let start = a.get(src);
            let mut z = [0i32; MAX_DIM];
            let mut off = [0i32; MAX_DIM];
            'walkers: for _ in 0..opts.walkers {
                z[..d].copy_from_slice(start);
                loop {
                    if steps >= opts.step_budget {
                        t.partial = true;
                        break 'walkers;
                    }
                    steps += 1;
                    let y = eta.sample_step(&mut rng);
                    let mut r2 = 0.0;
                    for k in 0..d {
                        z[k] += y[k];
                        r2 += (z[k] as f64 - centroid[k]).powi(2);
                    }
                    if r2 <= inner_r2 && members.contains(&pack_key(&z[..d])) {
                        break;
                    }
                    if r2 > exit_r2 {
                        for k in 0..d {
                            off[k] = z[k] - centre[k];
                        }
                        let g = ev.green(&off[..d]);
                        t.escapes += 1;
                        t.g += g;
                        t.g2 += g * g;
                        break;
                    }
                }
            }
            t
        })
        .collect();

    let w = opts.walkers as f64;
    let scale = m as f64 / k as f64;
    let s1 = scale * tallies.iter().map(|t| t.escapes as f64 / w).sum::<f64>();
    let s2 = scale * tallies.iter().map(|t| t.g / w).sum::<f64>();
    let value = s1 / (1.0 + s2);

    // Per-walker contribution v = 1{exit}(1 − cap·g); cap = scale·Σ mean(v)/(1+S₂)
    // to first order.
    let per_source: Vec<(f64, f64)> = tallies
        .iter()
        .map(|t| {
            let sum_v = t.escapes as f64 - value * t.g;
            let sum_v2 = t.escapes as f64 - 2.0 * value * t.g + value * value * t.g2;
            let mean = sum_v / w;
            let var = if opts.walkers > 1 {
                ((sum_v2 - w * mean * mean) / (w - 1.0)).max(0.0)
            } else {
                0.0
            };
            (mean, var)
        })
        .collect();
    let var = if k == m {
        per_source.iter().map(|&(_, v)| v / w).sum::<f64>()
    } else {
        let means: Vec<f64> = per_source.iter().map(|&(mu, _)| mu).collect();
        let (_, se) = crate::stats::mean_se(&means);
        (m as f64 * se).powi(2)
    };
    let stat_error = var.sqrt() / (1.0 + s2);

    // Far-field error: |G(z−y) − G(z−c)| for |y − c| ≤ r_a (+ rounding of c),
    // bounded through the asymptotic form, plus the relative error of the
    // Green values themselves.
    let (lam_min, lam_max) = sigma_eigen_range(eta);
    let j0 = exit_r / lam_max.sqrt();
    let delta = (r_a + (d as f64).sqrt() / 2.0) / lam_min.sqrt();
    let c = ev.c_d_eta();
    let p = d as i32 - 2;
    let monopole = if j0 > delta {
        c * ((j0 - delta).powi(-p) - j0.powi(-p))
    } else {
        f64::INFINITY
    };
    let green_rel = if ev.crossover_jump().is_finite() {
        ev.crossover_jump()
    } else {
        1e-3
    };
    let bias = s1 * value * monopole + value * s2 * green_rel;

    Ok(CapacityResult {
        value,
        method: CapacityMethod::MonteCarlo,
        error: stat_error + bias,
        escape_probs: None,
        params: CapacityParams {
            walkers: Some(opts.walkers),
            sources: Some(k),
            rho: Some(opts.rho),
            exit_radius: Some(exit_r),
            stat_error: Some(stat_error),
            bias: Some(bias),
            estimated: k < m,
            partial: tallies.iter().any(|t| t.partial),
            ..Default::default()
        },
    })
}

fn sigma_eigen_range(eta: &LatticeStepDistribution) -> (f64, f64) {
    let d = eta.dim();
    let s = nalgebra::DMatrix::from_row_slice(d, d, eta.covariance());
    let ev = s.symmetric_eigenvalues();
    (ev.min(), ev.max())
}

/// Σ_{x,y} G(x, y) over a set or multiset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GreenSum {
    pub value: f64,
    /// 1σ; zero when exact.
    pub error: f64,
    pub estimated: bool,
}

/// Exact double sum over the distinct points (weighted by multiplicity)
/// when their number is at most `ceiling`; otherwise diagonal exact plus
/// `samples` uniformly drawn off-diagonal ordered pairs.
pub fn green_sum<R: Rng + ?Sized>(
    points: &LatticePoints,
    mult: Option<&[u64]>,
    ev: &GreenEvaluator,
    ceiling: usize,
    samples: usize,
    rng: &mut R,
) -> GreenSum {
    let m = points.len();
    let weight = |i: usize| mult.map_or(1.0, |w| w[i] as f64);
    let g0 = ev.green(&[0; MAX_DIM][..points.dim()]);
    let diag: f64 = (0..m).map(|i| weight(i).powi(2) * g0).sum();
    if m <= ceiling {
        // Rows are summed in index order so the result does not depend on
        // scheduling.
        let symmetric = ev.dist().is_symmetric();
        let rows: Vec<f64> = (0..m)
            .into_par_iter()
            .map(|i| {
                let wi = weight(i);
                let lo = if symmetric { i + 1 } else { 0 };
                let s = (lo..m)
                    .filter(|&j| j != i)
                    .map(|j| wi * weight(j) * ev.green_between(points.get(i), points.get(j)))
                    .sum::<f64>();
                if symmetric {
                    2.0 * s
                } else {
                    s
                }
            })
            .collect();
        let off: f64 = rows.iter().sum();
        return GreenSum {
            value: diag + off,
            error: 0.0,
            estimated: false,
        };
    }
    // Ordered off-diagonal pairs (i, j), i ≠ j, uniformly; the estimator is
    // m(m−1) · mean(w_i w_j G).
    let samples = samples.max(2);
    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for _ in 0..samples {
        let i = rng.random_range(0..m);
        let mut j = rng.random_range(0..m - 1);
        if j >= i {
            j += 1;
        }
        let v = weight(i) * weight(j) * ev.green_between(points.get(i), points.get(j));
        sum += v;
        sum2 += v * v;
    }
    let n = samples as f64;
    let mean = sum / n;
    let var = ((sum2 - n * mean * mean) / (n - 1.0)).max(0.0);
    let pairs = m as f64 * (m as f64 - 1.0);
    GreenSum {
        value: diag + pairs * mean,
        error: pairs * (var / n).sqrt(),
        estimated: true,
    }
}

/// #A/(k+1) − Σ_{x,y∈A} G(x,y) / (k(k+1)) for a set A with known Green sum.
pub fn lower_bound_value(size: usize, green_sum: f64, k: u64) -> f64 {
    let k = k as f64;
    size as f64 / (k + 1.0) - green_sum / (k * (k + 1.0))
}

/// k = ⌈2 Σ G / #A⌉, which makes the bound at least about #A² / (8 Σ G).
pub fn auto_k(size: usize, green_sum: f64) -> u64 {
    ((2.0 * green_sum / size as f64).ceil() as u64).max(1)
}

/// The lower bound on the distinct points of `a`; `k = None` picks
/// [`auto_k`].
pub fn cap_lower_bound(
    a: &LatticePoints,
    ev: &GreenEvaluator,
    k: Option<u64>,
) -> Result<CapacityResult, CapacityError> {
    if a.is_empty() {
        return Err(CapacityError::Empty);
    }
    let a = a.dedup();
    let mut rng = rng_from_seed(0);
    let gs = green_sum(&a, None, ev, DEFAULT_PAIR_CEILING, 1_000_000, &mut rng);
    Ok(lower_bound_from_sum(a.len(), gs, k))
}

pub fn lower_bound_from_sum(size: usize, gs: GreenSum, k: Option<u64>) -> CapacityResult {
    if k == Some(0) {
        panic!("k must be ≥ 1");
    }
    let k = k.unwrap_or_else(|| auto_k(size, gs.value));
    let value = lower_bound_value(size, gs.value, k);
    let kf = k as f64;
    CapacityResult {
        value,
        method: CapacityMethod::LowerBound,
        error: gs.error / (kf * (kf + 1.0)),
        escape_probs: None,
        params: CapacityParams {
            k: Some(k),
            green_sum: Some(gs.value),
            estimated: gs.estimated,
            negative: value < 0.0,
            ..Default::default()
        },
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UpperBoundOptions {
    /// Exact over all rows when the number of distinct points is at most this.
    pub ceiling: usize,
    /// Rows examined above the ceiling: the farthest points from the
    /// centroid plus as many uniformly chosen ones.
    pub rows: usize,
    pub seed: u64,
}

impl Default for UpperBoundOptions {
    fn default() -> Self {
        Self {
            ceiling: DEFAULT_PAIR_CEILING,
            rows: 64,
            seed: 0,
        }
    }
}

/// (n+1) / min_i Σ_j G(V_i, V_j) over a position sequence with multiplicity.
pub fn cap_upper_bound(
    seq: &LatticePoints,
    ev: &GreenEvaluator,
) -> Result<CapacityResult, CapacityError> {
    cap_upper_bound_with(seq, ev, UpperBoundOptions::default())
}

pub fn cap_upper_bound_with(
    seq: &LatticePoints,
    ev: &GreenEvaluator,
    opts: UpperBoundOptions,
) -> Result<CapacityResult, CapacityError> {
    if seq.is_empty() {
        return Err(CapacityError::Empty);
    }
    let (pts, mult) = with_multiplicity(seq);
    upper_bound_from_multiset(&pts, &mult, ev, opts)
}

pub fn upper_bound_from_multiset(
    pts: &LatticePoints,
    mult: &[u64],
    ev: &GreenEvaluator,
    opts: UpperBoundOptions,
) -> Result<CapacityResult, CapacityError> {
    let m = pts.len();
    if m == 0 {
        return Err(CapacityError::Empty);
    }
    let total: u64 = mult.iter().sum();
    let row = |i: usize| -> f64 {
        (0..m)
            .map(|j| mult[j] as f64 * ev.green_between(pts.get(i), pts.get(j)))
            .sum()
    };
    let (rows, estimated): (Vec<usize>, bool) = if m <= opts.ceiling {
        ((0..m).collect(), false)
    } else {
        let c = pts.centroid();
        let mut by_dist: Vec<(f64, usize)> = (0..m)
            .map(|i| {
                (
                    pts.get(i)
                        .iter()
                        .zip(&c)
                        .map(|(&x, y)| (x as f64 - y).powi(2))
                        .sum(),
                    i,
                )
            })
            .collect();
        by_dist.sort_by(|a, b| b.0.total_cmp(&a.0));
        let mut rows: Vec<usize> = by_dist.iter().take(opts.rows).map(|e| e.1).collect();
        let mut rng = rng_from_seed(opts.seed);
        rows.extend(sample_indices(&mut rng, m, opts.rows.min(m)).into_iter());
        rows.sort_unstable();
        rows.dedup();
        (rows, true)
    };
    let mut sums: Vec<f64> = rows.par_iter().map(|&i| row(i)).collect();
    sums.sort_by(f64::total_cmp);
    let value = total as f64 / sums[0];
    // Gap to the bound from the second-smallest examined row, as a scale of
    // how sensitive the estimate is to the rows not examined.
    let error = if estimated && sums.len() > 1 {
        value - total as f64 / sums[1]
    } else {
        0.0
    };
    Ok(CapacityResult {
        value,
        method: CapacityMethod::UpperBound,
        error,
        escape_probs: None,
        params: CapacityParams {
            estimated,
            ..Default::default()
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::green::GreenEvaluator;

    fn setup(d: usize) -> (LatticeStepDistribution, GreenEvaluator) {
        let eta = LatticeStepDistribution::lazy_srw(d, 0.5).unwrap();
        (eta.clone(), GreenEvaluator::new(eta).unwrap())
    }

    fn pts(d: usize, v: &[i32]) -> LatticePoints {
        LatticePoints::from_flat(d, v.to_vec()).unwrap()
    }

    #[test]
    fn singleton_and_pair() {
        let (_, ev) = setup(3);
        let g0 = ev.green(&[0, 0, 0]);
        let one = cap_exact(&pts(3, &[0, 0, 0]), &ev).unwrap();
        assert!((one.value - 1.0 / g0).abs() < 1e-12);
        let gx = ev.green(&[2, 1, 0]);
        let two = cap_exact(&pts(3, &[0, 0, 0, 2, 1, 0]), &ev).unwrap();
        assert!((two.value - 2.0 / (g0 + gx)).abs() < 1e-12);
        // Duplicates are dropped before solving.
        let dup = cap_exact(&pts(3, &[0, 0, 0, 0, 0, 0]), &ev).unwrap();
        assert!((dup.value - one.value).abs() < 1e-15);
    }

    #[test]
    fn bounds_on_singleton() {
        let (_, ev) = setup(3);
        let g0 = ev.green(&[0, 0, 0]);
        let a = pts(3, &[0, 0, 0]);
        let lb = cap_lower_bound(&a, &ev, Some(1)).unwrap();
        assert!((lb.value - (0.5 - g0 / 2.0)).abs() < 1e-14);
        assert!(lb.params.negative);
        let seq = pts(3, &[0, 0, 0, 0, 0, 0, 0, 0, 0]);
        let ub = cap_upper_bound(&seq, &ev).unwrap();
        assert!((ub.value - 1.0 / g0).abs() < 1e-14);
        let big = cap_lower_bound(&a, &ev, Some(1_000_000)).unwrap();
        assert!(big.value.abs() < 1e-5);
    }

    #[test]
    fn green_sum_small_sets() {
        let (_, ev) = setup(4);
        let mut rng = rng_from_seed(1);
        let one = green_sum(&pts(4, &[1, 2, 3, 4]), None, &ev, 100, 0, &mut rng);
        assert_eq!(one.value, ev.green(&[0, 0, 0, 0]));
        let two = green_sum(
            &pts(4, &[0, 0, 0, 0, 1, 1, 0, 0]),
            None,
            &ev,
            100,
            0,
            &mut rng,
        );
        let want = 2.0 * ev.green(&[0, 0, 0, 0]) + 2.0 * ev.green(&[1, 1, 0, 0]);
        assert!((two.value - want).abs() < 1e-14);
    }

    #[test]
    fn capacity_is_translation_invariant() {
        let (_, ev) = setup(3);
        let a = pts(3, &[0, 0, 0, 1, 0, 0, 3, 2, 1, -2, 0, 4]);
        let b = a.translate(&[7, -5, 11]);
        let (x, y) = (
            cap_exact(&a, &ev).unwrap().value,
            cap_exact(&b, &ev).unwrap().value,
        );
        assert!((x - y).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_singleton() {
        let (eta, ev) = setup(3);
        let opts = MonteCarloOptions {
            walkers: 20_000,
            rho: 4.0,
            seed: 3,
            ..Default::default()
        };
        let r = cap_monte_carlo(&pts(3, &[0, 0, 0]), &eta, &ev, opts).unwrap();
        let exact = 1.0 / ev.green(&[0, 0, 0]);
        assert!(
            (r.value - exact).abs() <= 3.0 * r.error,
            "{} ± {} vs {exact}",
            r.value,
            r.error
        );
        assert!(r.params.stat_error.unwrap() < 0.01);
    }

    #[test]
    fn monte_carlo_far_pair_tends_to_twice_singleton() {
        let (eta, ev) = setup(5);
        let opts = MonteCarloOptions {
            walkers: 4000,
            rho: 2.0,
            seed: 4,
            ..Default::default()
        };
        let r =
            cap_monte_carlo(&pts(5, &[0, 0, 0, 0, 0, 12, 0, 0, 0, 0]), &eta, &ev, opts).unwrap();
        let exact = cap_exact(&pts(5, &[0, 0, 0, 0, 0, 12, 0, 0, 0, 0]), &ev)
            .unwrap()
            .value;
        assert!((r.value - exact).abs() <= 3.0 * r.error);
        assert!((exact - 2.0 / ev.green(&[0; 5])).abs() < 0.01);
    }

    #[test]
    fn bias_term_shrinks_with_rho() {
        let (eta, ev) = setup(3);
        let a = pts(3, &[0, 0, 0, 1, 0, 0, 0, 2, 0]);
        let mut last = f64::INFINITY;
        for rho in [2.0, 4.0, 8.0] {
            let opts = MonteCarloOptions {
                walkers: 200,
                rho,
                seed: 5,
                ..Default::default()
            };
            let r = cap_monte_carlo(&a, &eta, &ev, opts).unwrap();
            let b = r.params.bias.unwrap() / r.value;
            assert!(b < last);
            last = b;
        }
    }

    #[test]
    fn result_serializes() {
        let (_, ev) = setup(3);
        let r = cap_exact(&pts(3, &[0, 0, 0]), &ev).unwrap();
        let json = r.to_json();
        assert!(json.contains("\"method\":\"exact-solve\""));
        let back: CapacityResult = serde_json::from_str(&json).unwrap();
        assert_eq!(back.method, CapacityMethod::ExactSolve);
        let mut buf = Vec::new();
        r.write_csv(&mut buf, true).unwrap();
        assert!(String::from_utf8(buf)
            .unwrap()
            .starts_with("value,method,error"));
    }
}
