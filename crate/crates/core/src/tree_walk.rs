//! Tree-indexed walks: lattice positions along a forest, range, local times.

use std::io::{Read, Write};

use rand::Rng;
use rustc_hash::FxHashMap;
use thiserror::Error;

use crate::forest::Forest;
use crate::lattice::{dist2, try_pack_key, LatticeError, LatticePoints, LatticeStepDistribution};

#[derive(Debug, Error)]
pub enum TreeWalkError {
    #[error("position of u_{0} overflows 32-bit coordinates")]
    Overflow(usize),
    #[error("checkpoint {n} outside a forest of {len} vertices")]
    Checkpoint { n: usize, len: usize },
    #[error("subtree count {m} exceeds the {available} complete subtrees")]
    Subtrees { m: usize, available: usize },
    #[error(transparent)]
    Lattice(#[from] LatticeError),
    #[error("point csv: {0}")]
    Csv(String),
}

/// A forest with one lattice position per vertex, V_{u_0} = 0.
pub struct PositionedForest<'a> {
    forest: &'a Forest,
    positions: LatticePoints,
}

impl<'a> PositionedForest<'a> {
    pub fn forest(&self) -> &'a Forest {
        self.forest
    }

    pub fn positions(&self) -> &LatticePoints {
        &self.positions
    }

    pub fn position(&self, i: usize) -> &[i32] {
        self.positions.get(i)
    }

    pub fn dim(&self) -> usize {
        self.positions.dim()
    }
}

/// Draws one θ-step per edge. Parents precede children in DFS order, so a
/// single forward pass suffices. Step i is the i-th draw, hence a prefix
/// forest gets the same positions as the full forest from the same seed.
pub fn assign_positions<'a, R: Rng + ?Sized>(
    forest: &'a Forest,
    theta: &LatticeStepDistribution,
    rng: &mut R,
) -> Result<PositionedForest<'a>, TreeWalkError> {
    let d = theta.dim();
    let nv = forest.num_vertices();
    let mut coords = vec![0i32; nv * d];
    for i in 1..nv {
        let p = forest.parent(i).expect("only u_0 lacks a parent");
        let step = theta.sample_step(rng);
        for k in 0..d {
            coords[i * d + k] = coords[p * d + k]
                .checked_add(step[k])
                .ok_or(TreeWalkError::Overflow(i))?;
        }
    }
    let positions = LatticePoints::from_flat(d, coords)?;
    Ok(PositionedForest { forest, positions })
}

/// Statistics of R[0, n].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RangeAccounting {
    pub n: usize,
    pub range_size: usize,
    pub sum_l2: u64,
    /// max_{i ≤ n} |V_{u_i}|, Euclidean, rounded up.
    pub max_abs_pos: u64,
}

/// Incremental local times. Distinct points are kept in order of first
/// visit, so the first `range_size` of them form the range of any prefix.
pub struct RangeTracker {
    local: FxHashMap<u128, u32>,
    first_visits: LatticePoints,
    visited: usize,
    sum_l2: u64,
    max_d2: i64,
}

impl RangeTracker {
    pub fn new(dim: usize) -> Self {
        Self {
            local: FxHashMap::default(),
            first_visits: LatticePoints::new(dim),
            visited: 0,
            sum_l2: 0,
            max_d2: 0,
        }
    }

    pub fn push(&mut self, p: &[i32]) -> Result<(), TreeWalkError> {
        let key = try_pack_key(p)?;
        let l = self.local.entry(key).or_insert(0);
        // (L+1)² − L² = 2L + 1
        self.sum_l2 += 2 * *l as u64 + 1;
        *l += 1;
        if *l == 1 {
            self.first_visits.push(p);
        }
        self.visited += 1;
        self.max_d2 = self.max_d2.max(dist2(p, &vec![0; p.len()]));
        Ok(())
    }

    /// Accounting for everything pushed so far (n = pushes − 1).
    pub fn snapshot(&self) -> RangeAccounting {
        RangeAccounting {
            n: self.visited.saturating_sub(1),
            range_size: self.first_visits.len(),
            sum_l2: self.sum_l2,
            max_abs_pos: ceil_sqrt(self.max_d2 as u64),
        }
    }

    pub fn first_visits(&self) -> &LatticePoints {
        &self.first_visits
    }

    pub fn into_first_visits(self) -> LatticePoints {
        self.first_visits
    }

    pub fn local_time(&self, p: &[i32]) -> u32 {
        try_pack_key(p)
            .ok()
            .and_then(|k| self.local.get(&k).copied())
            .unwrap_or(0)
    }

    /// (point, L) over the current range in first-visit order.
    pub fn local_times(&self) -> Vec<(Vec<i32>, u32)> {
        self.first_visits
            .iter()
            .map(|p| (p.to_vec(), self.local_time(p)))
            .collect()
    }
}

fn ceil_sqrt(v: u64) -> u64 {
    let mut r = (v as f64).sqrt() as u64;
    while r * r < v {
        r += 1;
    }
    while r > 0 && (r - 1) * (r - 1) >= v {
        r -= 1;
    }
    r
}

/// One pass over u_0..u_{max checkpoint}, snapshotting at each checkpoint
/// (sorted ascending).
pub fn range_accounting(
    pf: &PositionedForest,
    checkpoints: &[usize],
) -> Result<Vec<RangeAccounting>, TreeWalkError> {
    Ok(range_with_points(pf, checkpoints)?.0)
}

/// As [`range_accounting`], also returning the distinct points of the
/// largest prefix in first-visit order.
pub fn range_with_points(
    pf: &PositionedForest,
    checkpoints: &[usize],
) -> Result<(Vec<RangeAccounting>, LatticePoints), TreeWalkError> {
    let len = pf.positions.len();
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut tracker = RangeTracker::new(pf.dim());
    let mut next = 0usize;
    for &n in checkpoints {
        if n >= len {
            return Err(TreeWalkError::Checkpoint { n, len });
        }
        assert!(n + 1 >= next, "checkpoints must be ascending");
        while next <= n {
            tracker.push(pf.position(next))?;
            next += 1;
        }
        out.push(tracker.snapshot());
    }
    Ok((out, tracker.into_first_visits()))
}

/// Accounting over the first m complete subtrees, i.e. the prefix ending
/// at subtree_offsets[m] − 1.
pub fn range_subtree_mode(
    pf: &PositionedForest,
    m: usize,
) -> Result<RangeAccounting, TreeWalkError> {
    let available = pf.forest.num_subtrees();
    if m == 0 || m > available {
        return Err(TreeWalkError::Subtrees { m, available });
    }
    let end = pf.forest.subtree_offsets()[m] as usize - 1;
    Ok(range_accounting(pf, &[end])?[0])
}

/// Writes `x1,..,xd` rows.
pub fn write_points_csv<W: Write>(points: &LatticePoints, out: W) -> Result<(), TreeWalkError> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<String> = (1..=points.dim()).map(|i| format!("x{i}")).collect();
    w.write_record(&header)
        .map_err(|e| TreeWalkError::Csv(e.to_string()))?;
    for p in points.iter() {
        w.write_record(p.iter().map(|c| c.to_string()))
            .map_err(|e| TreeWalkError::Csv(e.to_string()))?;
    }
    w.flush().map_err(|e| TreeWalkError::Csv(e.to_string()))
}

/// Reads the format written by [`write_points_csv`]; the dimension is the
/// number of header columns.
pub fn read_points_csv<R: Read>(input: R) -> Result<LatticePoints, TreeWalkError> {
    let err = |e: &dyn std::fmt::Display| TreeWalkError::Csv(e.to_string());
    let mut r = csv::Reader::from_reader(input);
    let dim = r.headers().map_err(|e| err(&e))?.len();
    let mut coords = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| err(&e))?;
        for f in rec.iter() {
            coords.push(f.trim().parse::<i32>().map_err(|e| err(&e))?);
        }
    }
    Ok(LatticePoints::from_flat(dim, coords)?)
}
