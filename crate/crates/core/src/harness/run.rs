use std::time::Instant;

use rayon::prelude::*;
use thiserror::Error;

use super::config::{ConfigError, ExperimentConfig, Mode};
use super::record::{RecordWriter, TrialRecord};
use crate::capacity::{
    cap_exact_with, cap_monte_carlo, green_sum, lower_bound_from_sum, upper_bound_from_multiset,
    with_multiplicity, ExactOptions, MonteCarloOptions, UpperBoundOptions, DEFAULT_CONDITION_LIMIT,
};
use crate::forest::{
    build_forest_prefix, build_forest_until, sample_conditioned_tree, total_progeny_at, Forest,
    ForestError,
};
use crate::green::{GreenError, GreenEvaluator};
use crate::lattice::{LatticeError, LatticePoints, LatticeStepDistribution};
use crate::offspring::{OffspringDistribution, OffspringError};
use crate::seed::{derive_seed, rng_from_seed};
use crate::tree_walk::{assign_positions, PositionedForest, RangeTracker};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("offspring law: {0}")]
    Offspring(#[from] OffspringError),
    #[error("step law: {0}")]
    Lattice(#[from] LatticeError),
    #[error("Green function: {0}")]
    Green(#[from] GreenError),
    #[error("θ has dimension {theta}, η has {eta}, config says {dim}")]
    Dimension {
        dim: usize,
        theta: usize,
        eta: usize,
    },
    #[error("output: {0}")]
    Io(#[from] std::io::Error),
    #[error("thread pool: {0}")]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Tasks handed to the pool per flush. Fixed so the file layout does not
/// depend on the thread count.
const BATCH: usize = 8;

struct Context<'a> {
    cfg: &'a ExperimentConfig,
    hash: String,
    mu: OffspringDistribution,
    theta: LatticeStepDistribution,
    eta: LatticeStepDistribution,
    ev: Option<GreenEvaluator>,
}

/// Runs every (n, trial) of `cfg`, appending to `cfg.out` batch by batch.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<TrialRecord>, RunError> {
    let mut writer = RecordWriter::append(&cfg.out)?;
    run_experiment_with(cfg, |batch| writer.write_batch(batch))
}

/// As [`run_experiment`], handing each sorted batch to `sink` instead of a
/// file.
pub fn run_experiment_with(
    cfg: &ExperimentConfig,
    mut sink: impl FnMut(&[TrialRecord]) -> std::io::Result<()>,
) -> Result<Vec<TrialRecord>, RunError> {
    cfg.validate()?;
    let mu = OffspringDistribution::parse(&cfg.mu)?;
    let theta = LatticeStepDistribution::parse(&cfg.theta, cfg.dim)?;
    let eta = LatticeStepDistribution::parse(&cfg.eta, cfg.dim)?;
    if theta.dim() != cfg.dim || eta.dim() != cfg.dim {
        return Err(RunError::Dimension {
            dim: cfg.dim,
            theta: theta.dim(),
            eta: eta.dim(),
        });
    }
    let ev = if cfg.capacity {
        Some(GreenEvaluator::new(eta.clone())?)
    } else {
        None
    };
    let ctx = Context {
        cfg,
        hash: cfg.hash(),
        mu,
        theta,
        eta,
        ev,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()?;
    let grid = cfg.grid();
    let tasks: Vec<(Option<u64>, u32)> = match cfg.mode {
        Mode::Conditioned => grid
            .iter()
            .flat_map(|&n| (0..cfg.trials).map(move |t| (Some(n), t)))
            .collect(),
        _ => (0..cfg.trials).map(|t| (None, t)).collect(),
    };
    let mut all = Vec::new();
    for chunk in tasks.chunks(BATCH) {
        let mut batch: Vec<TrialRecord> = pool.install(|| {
            chunk
                .par_iter()
                .map(|&(n, t)| match n {
                    Some(n) => vec![ctx.conditioned_trial(n, t)],
                    None => ctx.nested_trial(&grid, t),
                })
                .collect::<Vec<_>>()
                .into_iter()
                .flatten()
                .collect()
        });
        batch.sort_by_key(|r| (r.n, r.trial));
        sink(&batch)?;
        all.extend(batch);
    }
    all.sort_by_key(|r| (r.n, r.trial));
    Ok(all)
}

impl Context<'_> {
    fn blank(&self, n: u64, trial: u32, seed: u64) -> TrialRecord {
        TrialRecord {
            config_hash: self.hash.clone(),
            mode: self.cfg.mode.as_str().into(),
            dim: self.cfg.dim as u32,
            mu: self.cfg.mu.clone(),
            theta: self.cfg.theta.clone(),
            eta: self.cfg.eta.clone(),
            n,
            trial,
            seed,
            ..Default::default()
        }
    }

    /// One forest per trial serving every grid point: prefixes in vertices
    /// mode, leading subtrees in subtrees mode.
    fn nested_trial(&self, grid: &[u64], t: u32) -> Vec<TrialRecord> {
        let cfg = self.cfg;
        let seed = derive_seed(cfg.seed, &[0, t as u64]);
        let mut clock = Instant::now();
        let n_max = *grid.last().unwrap() as usize;
        if cfg.mode == Mode::Subtrees && !cfg.walk {
            // Only sizes are needed: sample them generation by generation.
            let sizes =
                total_progeny_at(&self.mu, grid, &mut rng_from_seed(derive_seed(seed, &[1])));
            let elapsed = clock.elapsed().as_millis() as u64;
            return grid
                .iter()
                .zip(sizes)
                .map(|(&n, v)| TrialRecord {
                    num_vertices: Some(v),
                    num_subtrees: Some(n),
                    elapsed_ms: elapsed,
                    ..self.blank(n, t, seed)
                })
                .collect();
        }
        let forest = match cfg.mode {
            Mode::Vertices => {
                if n_max + 1 > cfg.vertex_budget {
                    return self.failed(grid, t, seed, "vertex-budget");
                }
                match build_forest_prefix(
                    &self.mu,
                    n_max + 1,
                    &mut rng_from_seed(derive_seed(seed, &[1])),
                ) {
                    Ok(f) => f,
                    Err(_) => return self.failed(grid, t, seed, "forest"),
                }
            }
            _ => build_forest_until(
                &self.mu,
                n_max,
                cfg.vertex_budget,
                &mut rng_from_seed(derive_seed(seed, &[1])),
            ),
        };
        let pf = if cfg.walk {
            match assign_positions(
                &forest,
                &self.theta,
                &mut rng_from_seed(derive_seed(seed, &[2])),
            ) {
                Ok(pf) => Some(pf),
                Err(_) => return self.failed(grid, t, seed, "overflow"),
            }
        } else {
            None
        };
        let mut tracker = pf.as_ref().map(|pf| RangeTracker::new(pf.dim()));
        let mut pushed = 0usize;
        let mut out = Vec::with_capacity(grid.len());
        for &n in grid {
            let mut rec = self.blank(n, t, seed);
            let end = match cfg.mode {
                Mode::Vertices => n as usize,
                _ => {
                    if n as usize > forest.num_subtrees() {
                        rec.num_subtrees = Some(forest.num_subtrees() as u64);
                        rec.error_tag = "vertex-budget".into();
                        out.push(rec);
                        continue;
                    }
                    forest.subtree_offsets()[n as usize] as usize - 1
                }
            };
            rec.num_vertices = Some(end as u64 + 1);
            rec.num_subtrees = Some(
                forest.subtree_offsets()[1..]
                    .iter()
                    .take_while(|&&o| o as usize <= end + 1)
                    .count() as u64,
            );
            rec.max_depth = Some(forest.max_depth(end) as u64);
            if let (Some(pf), Some(tr)) = (pf.as_ref(), tracker.as_mut()) {
                let mut failed = false;
                while pushed <= end {
                    if tr.push(pf.position(pushed)).is_err() {
                        failed = true;
                        break;
                    }
                    pushed += 1;
                }
                if failed {
                    rec.error_tag = "overflow".into();
                } else {
                    self.fill_walk(&mut rec, pf, tr, end, seed);
                }
            }
            rec.elapsed_ms = clock.elapsed().as_millis() as u64;
            clock = Instant::now();
            out.push(rec);
        }
        out
    }

    fn conditioned_trial(&self, n: u64, t: u32) -> TrialRecord {
        let seed = derive_seed(self.cfg.seed, &[n, t as u64]);
        let clock = Instant::now();
        let mut rec = self.blank(n, t, seed);
        let tree = match sample_conditioned_tree(
            &self.mu,
            n as usize,
            &mut rng_from_seed(derive_seed(seed, &[1])),
        ) {
            Ok(tree) => tree,
            Err(e) => {
                rec.error_tag = match e {
                    ForestError::NoTreeOfSize { .. } => "no-tree-of-size",
                    ForestError::AcceptanceTooLow { .. } | ForestError::RejectionLimit { .. } => {
                        "acceptance"
                    }
                    _ => "forest",
                }
                .into();
                return rec;
            }
        };
        let end = tree.num_vertices() - 1;
        rec.num_vertices = Some(tree.num_vertices() as u64);
        rec.num_subtrees = Some(1);
        rec.max_depth = Some(tree.max_depth(end) as u64);
        if self.cfg.walk {
            self.walk_whole(&mut rec, &tree, end, seed);
        }
        rec.elapsed_ms = clock.elapsed().as_millis() as u64;
        rec
    }

    fn walk_whole(&self, rec: &mut TrialRecord, tree: &Forest, end: usize, seed: u64) {
        let Ok(pf) = assign_positions(
            tree,
            &self.theta,
            &mut rng_from_seed(derive_seed(seed, &[2])),
        ) else {
            rec.error_tag = "overflow".into();
            return;
        };
        let mut tr = RangeTracker::new(pf.dim());
        for i in 0..=end {
            if tr.push(pf.position(i)).is_err() {
                rec.error_tag = "overflow".into();
                return;
            }
        }
        self.fill_walk(rec, &pf, &tr, end, seed);
    }

    /// Range statistics of u_0..u_end and, if enabled, the capacities.
    fn fill_walk(
        &self,
        rec: &mut TrialRecord,
        pf: &PositionedForest,
        tr: &RangeTracker,
        end: usize,
        seed: u64,
    ) {
        let acc = tr.snapshot();
        debug_assert_eq!(acc.n, end);
        rec.range_size = Some(acc.range_size as u64);
        rec.sum_l2 = Some(acc.sum_l2);
        rec.max_abs_pos = Some(acc.max_abs_pos);

        let prefix = LatticePoints::from_flat(
            pf.dim(),
            pf.positions().flat()[..(end + 1) * pf.dim()].to_vec(),
        )
        .expect("prefix of a valid point list");
        let (points, mult) = with_multiplicity(&prefix);
        // Σ_x L^x_n = n + 1, and (n + 1)² ≤ #R · Σ L² by Cauchy–Schwarz.
        let visits: u64 = mult.iter().sum();
        let sum_sq: u64 = mult.iter().map(|l| l * l).sum();
        let n1 = end as u128 + 1;
        if visits != end as u64 + 1
            || points.len() != acc.range_size
            || sum_sq != acc.sum_l2
            || n1 * n1 > acc.range_size as u128 * acc.sum_l2 as u128
        {
            rec.error_tag = "identity".into();
            return;
        }
        let Some(ev) = self.ev.as_ref() else { return };
        self.fill_capacity(rec, &points, &mult, ev, derive_seed(seed, &[3, end as u64]));
    }

    fn fill_capacity(
        &self,
        rec: &mut TrialRecord,
        points: &LatticePoints,
        mult: &[u64],
        ev: &GreenEvaluator,
        seed: u64,
    ) {
        let cfg = self.cfg;
        let m = points.len();
        let gs = green_sum(
            points,
            None,
            ev,
            cfg.pair_ceiling,
            cfg.green_samples,
            &mut rng_from_seed(derive_seed(seed, &[0])),
        );
        rec.green_sum = Some(gs.value);
        rec.green_sum_method = if gs.estimated { "sampled" } else { "exact" }.into();
        rec.cap_lower = Some(lower_bound_from_sum(m, gs, None).value);
        let ub = UpperBoundOptions {
            ceiling: cfg.pair_ceiling,
            rows: cfg.upper_rows,
            seed: derive_seed(seed, &[1]),
        };
        match upper_bound_from_multiset(points, mult, ev, ub) {
            Ok(u) => rec.cap_upper = Some(u.value),
            Err(_) => rec.error_tag = "upper-bound".into(),
        }
        let value = if m <= cfg.solve_ceiling {
            cap_exact_with(
                points,
                ev,
                ExactOptions {
                    ceiling: cfg.solve_ceiling,
                    condition_limit: DEFAULT_CONDITION_LIMIT,
                },
            )
        } else {
            let opts = MonteCarloOptions {
                walkers: cfg.mc_walkers,
                rho: cfg.mc_rho,
                step_budget: cfg.mc_step_budget,
                sources: (cfg.mc_sources > 0).then_some(cfg.mc_sources),
                seed: derive_seed(seed, &[2]),
            };
            cap_monte_carlo(points, &self.eta, ev, opts)
        };
        match value {
            Ok(c) => {
                rec.cap_value = Some(c.value);
                rec.cap_method = c.method.as_str().into();
                rec.cap_error = Some(c.error);
                if c.params.partial && rec.error_tag.is_empty() {
                    rec.error_tag = "step-budget".into();
                }
            }
            Err(_) => rec.error_tag = "capacity".into(),
        }
        if rec.error_tag.is_empty() && !rec.sandwich_holds() {
            rec.error_tag = "sandwich".into();
        }
    }

    fn failed(&self, grid: &[u64], t: u32, seed: u64, tag: &str) -> Vec<TrialRecord> {
        grid.iter()
            .map(|&n| TrialRecord {
                error_tag: tag.into(),
                ..self.blank(n, t, seed)
            })
            .collect()
    }
}
