//! Array-encoded Galton–Watson forests in depth-first order.
//!
//! A forest is an infinite spine w_0, w_1, ... with an independent μ-GW tree
//! T_m hung at each w_m. Vertices are numbered u_0, u_1, ... by visiting T_0
//! in depth-first (lexicographic) order, then T_1, and so on. Every
//! structural query in this module works on that numbering.
//!
//! Blocks: `subtree_offsets[m]` is the index of w_m, the first vertex of T_m.
//! The array has `num_subtrees + 1` entries; the last one is where the first
//! incomplete block starts. Vertices past it (if any) are either the lone
//! spine vertex that closes a `build_forest_by_*` forest or the unfinished
//! part of a tree in a prefix build.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Binomial, Distribution};
use thiserror::Error;

use crate::offspring::OffspringDistribution;

const NO_PARENT: u32 = u32::MAX;

/// Default cap on vertices materialized by a single build.
pub const DEFAULT_VERTEX_BUDGET: usize = 1 << 26;
/// Exact pair counting refuses prefixes longer than this by default.
pub const DEFAULT_PAIR_COUNT_CEILING: usize = 20_000;

#[derive(Debug, Error, PartialEq)]
pub enum ForestError {
    #[error("forest would exceed the vertex budget of {limit}")]
    VertexBudget { limit: usize },
    #[error("index {index} out of range for a forest with {len} vertices")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("exact pair counting needs n ≤ {ceiling}, got {n}; use the sampled estimator")]
    ExactCeiling { n: usize, ceiling: usize },
    #[error("conditioned sampling requires μ(0) > 0")]
    NoLeaves,
    #[error("μ cannot produce a tree with exactly {n} vertices")]
    NoTreeOfSize { n: usize },
    #[error("bridge acceptance probability {estimate:.3e} is below the floor {floor:.3e}")]
    AcceptanceTooLow { estimate: f64, floor: f64 },
    #[error("gave up after {attempts} bridge rejections")]
    RejectionLimit { attempts: u64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("forest record: {0}")]
    Decode(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Forest {
    parent: Vec<u32>,
    depth: Vec<u32>,
    spine_index: Vec<u32>,
    is_spine: Vec<bool>,
    offspring: Vec<u32>,
    subtree_offsets: Vec<u32>,
}

#[derive(Clone, Copy, PartialEq)]
enum Stop {
    /// Finish the subtree holding u_{n-1}, then append the next spine vertex.
    Vertices(usize),
    /// Exactly n vertices, possibly mid-subtree.
    Prefix(usize),
    /// m complete subtrees, then the next spine vertex.
    Subtrees(usize),
}

struct Builder {
    forest: Forest,
    // (vertex, children still to be created)
    stack: Vec<(u32, u32)>,
    budget: usize,
}

impl Builder {
    fn new(capacity: usize, budget: usize) -> Self {
        let cap = capacity.min(budget);
        Self {
            forest: Forest {
                parent: Vec::with_capacity(cap),
                depth: Vec::with_capacity(cap),
                spine_index: Vec::with_capacity(cap),
                is_spine: Vec::with_capacity(cap),
                offspring: Vec::with_capacity(cap),
                subtree_offsets: vec![0],
            },
            stack: Vec::new(),
            budget,
        }
    }

    fn len(&self) -> usize {
        self.forest.parent.len()
    }

    fn completed_subtrees(&self) -> usize {
        self.forest.subtree_offsets.len() - 1
    }

    /// Appends the root of the next block, which is the next spine vertex.
    fn push_spine(&mut self) -> Result<u32, ForestError> {
        let m = self.completed_subtrees() as u32;
        let i = self.len();
        if i >= self.budget || i >= NO_PARENT as usize {
            return Err(ForestError::VertexBudget { limit: self.budget });
        }
        let f = &mut self.forest;
        let parent = if m == 0 {
            NO_PARENT
        } else {
            f.subtree_offsets[m as usize - 1]
        };
        f.parent.push(parent);
        f.depth.push(m);
        f.spine_index.push(m);
        f.is_spine.push(true);
        Ok(i as u32)
    }

    /// Appends one vertex with `k` children (drawn by the caller).
    fn push_vertex(&mut self, k: u32) -> Result<(), ForestError> {
        let i = if let Some(top) = self.stack.last_mut() {
            let parent = top.0;
            top.1 -= 1;
            if top.1 == 0 {
                self.stack.pop();
            }
            let i = self.len();
            if i >= self.budget || i >= NO_PARENT as usize {
                return Err(ForestError::VertexBudget { limit: self.budget });
            }
            let f = &mut self.forest;
            let m = f.spine_index[parent as usize];
            f.parent.push(parent);
            f.depth.push(f.depth[parent as usize] + 1);
            f.spine_index.push(m);
            f.is_spine.push(false);
            i as u32
        } else {
            self.push_spine()?
        };
        self.forest.offspring.push(k);
        if k > 0 {
            self.stack.push((i, k));
        } else if self.stack.is_empty() {
            self.close_subtree();
        }
        Ok(())
    }

    fn close_subtree(&mut self) {
        let end = self.len() as u32;
        self.forest.subtree_offsets.push(end);
    }

    fn run<R: Rng + ?Sized>(
        mut self,
        mu: &OffspringDistribution,
        stop: Stop,
        rng: &mut R,
    ) -> Result<Forest, ForestError> {
        loop {
            let done = match stop {
                Stop::Prefix(n) => self.len() >= n,
                Stop::Vertices(n) => self.stack.is_empty() && self.len() >= n,
                Stop::Subtrees(m) => self.stack.is_empty() && self.completed_subtrees() >= m,
            };
            if done {
                break;
            }
            let k = mu.sample(rng) as u32;
            self.push_vertex(k)?;
        }
        if !matches!(stop, Stop::Prefix(_)) {
            // The closing spine vertex carries no tree; it gets no draw.
            self.push_spine()?;
            self.forest.offspring.push(0);
        }
        let forest = self.forest;
        forest.self_check();
        Ok(forest)
    }
}

/// Builds the forest through the end of the subtree containing
/// u_{n_vertices-1}, followed by one extra spine vertex.
pub fn build_forest_by_vertices<R: Rng + ?Sized>(
    mu: &OffspringDistribution,
    n_vertices: usize,
    rng: &mut R,
) -> Result<Forest, ForestError> {
    build_forest_by_vertices_with_budget(mu, n_vertices, DEFAULT_VERTEX_BUDGET, rng)
}

pub fn build_forest_by_vertices_with_budget<R: Rng + ?Sized>(
    mu: &OffspringDistribution,
    n_vertices: usize,
    budget: usize,
    rng: &mut R,
) -> Result<Forest, ForestError> {
    if n_vertices == 0 {
        return Err(ForestError::InvalidArgument(
            "n_vertices must be ≥ 1".into(),
        ));
    }
    Builder::new(n_vertices, budget).run(mu, Stop::Vertices(n_vertices), rng)
}

/// Exactly `n_vertices` vertices u_0..u_{n-1}. Consumes the random source
/// exactly like [`build_forest_by_vertices`], so both builds agree on every
/// common vertex for the same seed.
pub fn build_forest_prefix<R: Rng + ?Sized>(
    mu: &OffspringDistribution,
    n_vertices: usize,
    rng: &mut R,
) -> Result<Forest, ForestError> {
    if n_vertices == 0 {
        return Err(ForestError::InvalidArgument(
            "n_vertices must be ≥ 1".into(),
        ));
    }
    Builder::new(n_vertices, usize::MAX).run(mu, Stop::Prefix(n_vertices), rng)
}

/// The first `subtrees` complete trees T_0..T_{m-1} plus the spine vertex w_m.
pub fn build_forest_by_subtrees<R: Rng + ?Sized>(
    mu: &OffspringDistribution,
    subtrees: usize,
    budget: usize,
    rng: &mut R,
) -> Result<Forest, ForestError> {
    if subtrees == 0 {
        return Err(ForestError::InvalidArgument(
            "need at least one subtree".into(),
        ));
    }
    Builder::new(subtrees * subtrees, budget).run(mu, Stop::Subtrees(subtrees), rng)
}

/// Runs until `subtrees` trees are complete or `max_vertices` vertices
/// exist, whichever comes first; never fails. The result holds however
/// many complete subtrees were reached (check [`Forest::num_subtrees`]),
/// with no closing spine vertex. Same random stream as the other builders.
pub fn build_forest_until<R: Rng + ?Sized>(
    mu: &OffspringDistribution,
    subtrees: usize,
    max_vertices: usize,
    rng: &mut R,
) -> Forest {
    let mut b = Builder::new(max_vertices.min(1 << 20), usize::MAX);
    while b.len() < max_vertices && !(b.stack.is_empty() && b.completed_subtrees() >= subtrees) {
        let k = mu.sample(rng) as u32;
        b.push_vertex(k).expect("no budget");
    }
    let f = b.forest;
    f.self_check();
    f
}

/// Builds a single tree from its depth-first offspring sequence (a
/// Łukasiewicz word). Returns `None` if the word does not code exactly one
/// tree.
pub fn tree_from_offspring(word: &[u32]) -> Option<Forest> {
    let mut b = Builder::new(word.len(), usize::MAX);
    for (i, &k) in word.iter().enumerate() {
        if i > 0 && b.stack.is_empty() {
            return None;
        }
        b.push_vertex(k).ok()?;
    }
    if !b.stack.is_empty() {
        return None;
    }
    let f = b.forest;
    f.self_check();
    Some(f)
}

#[derive(Debug, Clone, Copy)]
pub struct ConditionedOptions {
    /// Refuse to sample when the estimated per-attempt acceptance
    /// probability falls below this.
    pub acceptance_floor: f64,
    pub max_attempts: u64,
}

impl Default for ConditionedOptions {
    fn default() -> Self {
        Self {
            acceptance_floor: 1e-7,
            max_attempts: 100_000_000,
        }
    }
}

/// A μ-GW tree conditioned to have exactly `n` vertices.
///
/// Draws the offspring multiset by sequential binomials, rejects until the
/// counts form a bridge (Σ k·c_k = n − 1), shuffles it uniformly and rotates
/// it at the first minimum of its partial sums (cycle lemma).
pub fn sample_conditioned_tree<R: Rng + ?Sized>(
    mu: &OffspringDistribution,
    n: usize,
    rng: &mut R,
) -> Result<Forest, ForestError> {
    sample_conditioned_tree_with(mu, n, ConditionedOptions::default(), rng)
}

pub fn sample_conditioned_tree_with<R: Rng + ?Sized>(
    mu: &OffspringDistribution,
    n: usize,
    opts: ConditionedOptions,
    rng: &mut R,
) -> Result<Forest, ForestError> {
    if n == 0 {
        return Err(ForestError::InvalidArgument("n must be ≥ 1".into()));
    }
    if mu.prob(0) <= 0.0 {
        return Err(ForestError::NoLeaves);
    }
    if n == 1 {
        return Ok(tree_from_offspring(&[0]).expect("single root"));
    }

    let support: Vec<usize> = (0..mu.pmf().len()).filter(|&k| mu.prob(k) > 0.0).collect();
    let span = support.iter().fold(0usize, |g, &k| gcd(g, k - support[0]));
    let kmin = support[0];
    // Σ_i k_i ≡ n·kmin (mod span) must be compatible with n − 1.
    if span > 1 && ((n - 1) as i128 - (n * kmin) as i128).rem_euclid(span as i128) != 0 {
        return Err(ForestError::NoTreeOfSize { n });
    }
    let estimate =
        span.max(1) as f64 / (mu.variance() * 2.0 * std::f64::consts::PI * n as f64).sqrt();
    if estimate < opts.acceptance_floor {
        return Err(ForestError::AcceptanceTooLow {
            estimate,
            floor: opts.acceptance_floor,
        });
    }

    let pmf = mu.pmf();
    let mut counts = vec![0u64; pmf.len()];
    let mut attempts = 0u64;
    loop {
        attempts += 1;
        if attempts > opts.max_attempts {
            return Err(ForestError::RejectionLimit {
                attempts: opts.max_attempts,
            });
        }
        let mut remaining = n as u64;
        let mut rest_mass = 1.0;
        let mut children = 0u64;
        for (k, &p) in pmf.iter().enumerate() {
            let c = if k + 1 == pmf.len() || remaining == 0 {
                remaining
            } else {
                let q = (p / rest_mass).clamp(0.0, 1.0);
                Binomial::new(remaining, q)
                    .expect("valid binomial")
                    .sample(rng)
            };
            counts[k] = c;
            remaining -= c;
            rest_mass -= p;
            children += k as u64 * c;
        }
        if children == n as u64 - 1 {
            break;
        }
    }

    let mut word: Vec<u32> = Vec::with_capacity(n);
    for (k, &c) in counts.iter().enumerate() {
        word.extend(std::iter::repeat_n(k as u32, c as usize));
    }
    word.shuffle(rng);

    // Partial sums S_j = Σ_{i<j} (k_i − 1), j = 1..n; start after the first
    // index attaining the minimum.
    let mut s = 0i64;
    let mut min = i64::MAX;
    let mut at = 0usize;
    for (j, &k) in word.iter().enumerate() {
        s += k as i64 - 1;
        if s < min {
            min = s;
            at = j + 1;
        }
    }
    word.rotate_left(at % n);
    Ok(tree_from_offspring(&word).expect("cycle lemma yields a tree"))
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Total number of vertices in the first m subtrees, for each m in
/// `checkpoints` (sorted ascending), i.e. the hitting times
/// inf{k ≥ 1 : Y_k = −m} of the Łukasiewicz walk.
///
/// Runs generation by generation: a block of g open vertices produces a
/// next generation distributed as a g-fold sum of μ, which the shipped
/// families sample in closed form. Cost is the number of generations, not
/// the number of vertices.
pub fn total_progeny_at<R: Rng + ?Sized>(
    mu: &OffspringDistribution,
    checkpoints: &[u64],
    rng: &mut R,
) -> Vec<u64> {
    let mut out = Vec::with_capacity(checkpoints.len());
    let mut done_trees = 0u64;
    let mut total = 0u64;
    for &m in checkpoints {
        assert!(m >= done_trees, "checkpoints must be ascending");
        let mut generation = m - done_trees;
        while generation > 0 {
            total = total.saturating_add(generation);
            generation = mu.sample_sum(generation, rng);
        }
        done_trees = m;
        out.push(total);
    }
    out
}

/// Generation sizes Z_0 = 1, Z_1, ..., Z_{max_generation} of one μ-GW tree.
pub fn generation_sizes<R: Rng + ?Sized>(
    mu: &OffspringDistribution,
    max_generation: usize,
    rng: &mut R,
) -> Vec<u64> {
    let mut z = Vec::with_capacity(max_generation + 1);
    let mut g = 1u64;
    z.push(g);
    for _ in 0..max_generation {
        g = mu.sample_sum(g, rng);
        z.push(g);
    }
    z
}

/// (ζ_n, H_i for i ≤ n, max_{i≤n} depth).
#[derive(Debug, Clone, PartialEq)]
pub struct HeightStats {
    pub zeta: u32,
    pub heights: Vec<u32>,
    pub max_depth: u32,
}

/// Exact or estimated pair counts by graph distance.
#[derive(Debug, Clone, PartialEq)]
pub struct PairCounts {
    pub counts: Vec<f64>,
    /// One standard error per entry; zero for exact counts.
    pub stderr: Vec<f64>,
    pub estimated: bool,
}

impl Forest {
    pub fn num_vertices(&self) -> usize {
        self.parent.len()
    }

    /// Number of complete subtrees.
    pub fn num_subtrees(&self) -> usize {
        self.subtree_offsets.len() - 1
    }

    pub fn subtree_offsets(&self) -> &[u32] {
        &self.subtree_offsets
    }

    /// Index one past the last vertex of the last complete subtree.
    pub fn complete_vertices(&self) -> usize {
        *self.subtree_offsets.last().unwrap() as usize
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        match self.parent[i] {
            NO_PARENT => None,
            p => Some(p as usize),
        }
    }

    pub fn parents_raw(&self) -> &[u32] {
        &self.parent
    }

    pub fn depth(&self, i: usize) -> u32 {
        self.depth[i]
    }

    pub fn depths(&self) -> &[u32] {
        &self.depth
    }

    pub fn spine_index(&self, i: usize) -> u32 {
        self.spine_index[i]
    }

    pub fn is_spine(&self, i: usize) -> bool {
        self.is_spine[i]
    }

    /// Number of children of u_i inside its own subtree (the spine child, if
    /// any, is not counted). This is the Łukasiewicz step plus one.
    pub fn offspring(&self, i: usize) -> u32 {
        self.offspring[i]
    }

    /// Indices of w_0, w_1, ... present in the forest.
    pub fn spine(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.num_vertices()).filter(move |&i| self.is_spine[i])
    }

    /// Y_0 = 0, Y_{k+1} = Y_k + offspring(u_k) − 1, for all drawn vertices.
    pub fn lukasiewicz_path(&self) -> Vec<i64> {
        let drawn = if self.num_vertices() > self.complete_vertices()
            && self.is_spine[self.num_vertices() - 1]
            && self.num_vertices() - 1 == self.complete_vertices()
        {
            self.complete_vertices()
        } else {
            self.num_vertices()
        };
        let mut y = Vec::with_capacity(drawn + 1);
        let mut cur = 0i64;
        y.push(cur);
        for &k in &self.offspring[..drawn] {
            cur += k as i64 - 1;
            y.push(cur);
        }
        y
    }

    fn check_index(&self, i: usize) -> Result<(), ForestError> {
        if i >= self.num_vertices() {
            Err(ForestError::IndexOutOfRange {
                index: i,
                len: self.num_vertices(),
            })
        } else {
            Ok(())
        }
    }

    /// d(u_i, u_j) by climbing parent pointers from the deeper vertex.
    pub fn graph_distance(&self, i: usize, j: usize) -> Result<u32, ForestError> {
        self.check_index(i)?;
        self.check_index(j)?;
        let (mut a, mut b) = (i, j);
        while self.depth[a] > self.depth[b] {
            a = self.parent[a] as usize;
        }
        while self.depth[b] > self.depth[a] {
            b = self.parent[b] as usize;
        }
        while a != b {
            a = self.parent[a] as usize;
            b = self.parent[b] as usize;
        }
        Ok(self.depth[i] + self.depth[j] - 2 * self.depth[a])
    }

    pub fn height_and_spine_stats(&self, n: usize) -> Result<HeightStats, ForestError> {
        self.check_index(n)?;
        let heights: Vec<u32> = (0..=n)
            .map(|i| self.depth[i] - self.spine_index[i])
            .collect();
        let max_depth = self.depth[..=n].iter().copied().max().unwrap_or(0);
        Ok(HeightStats {
            zeta: self.spine_index[n],
            heights,
            max_depth,
        })
    }

    pub fn max_depth(&self, n: usize) -> u32 {
        self.depth[..=n].iter().copied().max().unwrap_or(0)
    }

    /// The event F_ε(n) = {max_{i≤n} d(∅, u_i) < n^{1/2+ε}}.
    pub fn depth_event(&self, n: usize, eps: f64) -> bool {
        (self.max_depth(n) as f64) < (n as f64).powf(0.5 + eps)
    }

    /// c[k] = #{(i, j) : 0 ≤ i ≤ j ≤ n, d(u_i, u_j) = k} for k ≤ k_max.
    ///
    /// Each pair is counted at its lowest common ancestor by merging
    /// depth histograms of child subtrees, bottom-up in reverse DFS order.
    pub fn pair_distance_counts(
        &self,
        n: usize,
        k_max: usize,
        ceiling: usize,
    ) -> Result<Vec<u64>, ForestError> {
        self.check_index(n)?;
        if n > ceiling {
            return Err(ForestError::ExactCeiling { n, ceiling });
        }
        let mut counts = vec![0u64; k_max + 1];
        counts[0] = n as u64 + 1;
        // hist[v][t]: prefix vertices at depth t below v (t ≤ k_max).
        let mut hist: Vec<Vec<u64>> = vec![vec![1]; n + 1];
        for v in (1..=n).rev() {
            let p = self.parent[v] as usize;
            let child = std::mem::take(&mut hist[v]);
            let into = &mut hist[p];
            for (a, &ha) in into.iter().enumerate() {
                for (b, &hb) in child.iter().enumerate() {
                    let k = a + b + 1;
                    if k > k_max {
                        break;
                    }
                    counts[k] += ha * hb;
                }
            }
            let want = (child.len() + 1).min(k_max + 1);
            if into.len() < want {
                into.resize(want, 0);
            }
            for (b, &hb) in child.iter().enumerate() {
                if b + 1 > k_max {
                    break;
                }
                into[b + 1] += hb;
            }
        }
        Ok(counts)
    }

    /// Unbiased estimate of the pair counts from `samples` uniformly drawn
    /// off-diagonal pairs; the diagonal (k = 0) is exact.
    pub fn pair_distance_counts_sampled<R: Rng + ?Sized>(
        &self,
        n: usize,
        k_max: usize,
        samples: usize,
        rng: &mut R,
    ) -> Result<PairCounts, ForestError> {
        self.check_index(n)?;
        let mut counts = vec![0.0; k_max + 1];
        let mut stderr = vec![0.0; k_max + 1];
        counts[0] = (n + 1) as f64;
        if n == 0 || samples == 0 {
            return Ok(PairCounts {
                counts,
                stderr,
                estimated: true,
            });
        }
        let lca = LcaTable::new(self, n);
        let mut hits = vec![0u64; k_max + 1];
        for _ in 0..samples {
            let i = rng.random_range(0..=n);
            let mut j = rng.random_range(0..n);
            if j >= i {
                j += 1;
            }
            let d = lca.distance(self, i, j) as usize;
            if d <= k_max {
                hits[d] += 1;
            }
        }
        let pairs = n as f64 * (n as f64 + 1.0) / 2.0;
        for k in 1..=k_max {
            let p = hits[k] as f64 / samples as f64;
            counts[k] = pairs * p;
            stderr[k] = pairs * (p * (1.0 - p) / samples as f64).sqrt();
        }
        Ok(PairCounts {
            counts,
            stderr,
            estimated: true,
        })
    }

    /// Structural invariants on a deterministic subset of vertices
    /// (`fraction` = 1 checks everything).
    pub fn validate(&self, fraction: f64) -> Result<(), String> {
        let nv = self.num_vertices();
        let lens = [
            self.depth.len(),
            self.spine_index.len(),
            self.is_spine.len(),
            self.offspring.len(),
        ];
        if lens.iter().any(|&l| l != nv) {
            return Err("array lengths differ".into());
        }
        if nv == 0 {
            return Err("empty forest".into());
        }
        if self.parent[0] != NO_PARENT || self.depth[0] != 0 || !self.is_spine[0] {
            return Err("u_0 must be the root ∅ = w_0".into());
        }
        let offs = &self.subtree_offsets;
        if offs[0] != 0
            || offs.windows(2).any(|w| w[0] >= w[1])
            || *offs.last().unwrap() as usize > nv
        {
            return Err("subtree offsets not strictly increasing within bounds".into());
        }
        let step = if fraction >= 1.0 {
            1
        } else {
            (1.0 / fraction.max(1e-9)).round() as usize
        };
        for i in (1..nv).step_by(step.max(1)) {
            let p = self.parent[i];
            if p == NO_PARENT || p as usize >= i {
                return Err(format!("u_{i}: parent index must precede it"));
            }
            let p = p as usize;
            if self.depth[i] != self.depth[p] + 1 {
                return Err(format!("u_{i}: depth is not parent depth + 1"));
            }
            let m = self.spine_index[i] as usize;
            let block_start = offs.get(m).copied().map(|o| o as usize);
            let expected_start = match block_start {
                Some(s) => s,
                None => return Err(format!("u_{i}: spine index {m} has no block")),
            };
            if i < expected_start || (m + 1 < offs.len() && i >= offs[m + 1] as usize) {
                return Err(format!("u_{i}: outside block {m}"));
            }
            if self.is_spine[i] != (i == expected_start) {
                return Err(format!("u_{i}: spine flag disagrees with block start"));
            }
            if self.is_spine[i] {
                if self.depth[i] != m as u32 || p != offs[m - 1] as usize {
                    return Err(format!("w_{m}: must sit at depth {m} below w_{}", m - 1));
                }
            } else if self.spine_index[p] as usize != m || self.depth[i] <= m as u32 {
                return Err(format!("u_{i}: parent outside its subtree"));
            }
        }
        if fraction >= 1.0 {
            let mut children = vec![0u32; nv];
            for i in 1..nv {
                if !self.is_spine[i] {
                    children[self.parent[i] as usize] += 1;
                }
            }
            let complete = self.complete_vertices();
            for i in 0..complete {
                if children[i] != self.offspring[i] {
                    return Err(format!("u_{i}: offspring count disagrees with children"));
                }
            }
            let y = self.lukasiewicz_path();
            for (m, &end) in offs.iter().enumerate().skip(1) {
                let hit = y.iter().position(|&v| v == -(m as i64));
                if hit != Some(end as usize) {
                    return Err(format!("block {m} end {end} ≠ hitting time {hit:?}"));
                }
            }
        }
        Ok(())
    }

    fn self_check(&self) {
        if cfg!(debug_assertions) {
            if let Err(e) = self.validate(1.0) {
                panic!("forest invariant violated: {e}");
            }
        } else if let Err(e) = self.validate(0.01) {
            panic!("forest invariant violated: {e}");
        }
    }

    const MAGIC: [u8; 4] = *b"BRWF";
    const VERSION: u16 = 1;

    /// Flat little-endian record: 16-byte header (magic, version, d = 0,
    /// vertex count, subtree count) then parent, depth, spine index,
    /// spine flag, offspring and subtree offsets arrays.
    pub fn to_bytes(&self) -> Vec<u8> {
        let nv = self.num_vertices();
        let mut out = Vec::with_capacity(16 + nv * 17 + self.subtree_offsets.len() * 4);
        out.extend_from_slice(&Self::MAGIC);
        out.extend_from_slice(&Self::VERSION.to_le_bytes());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(nv as u32).to_le_bytes());
        out.extend_from_slice(&(self.num_subtrees() as u32).to_le_bytes());
        for arr in [&self.parent, &self.depth, &self.spine_index] {
            arr.iter()
                .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
        out.extend(self.is_spine.iter().map(|&b| b as u8));
        self.offspring
            .iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        self.subtree_offsets
            .iter()
            .for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ForestError> {
        let bad = |m: &str| ForestError::Decode(m.to_string());
        if bytes.len() < 16 || bytes[..4] != Self::MAGIC {
            return Err(bad("missing BRWF header"));
        }
        let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
        if u16_at(4) != Self::VERSION {
            return Err(bad("unsupported version"));
        }
        if u16_at(6) != 0 {
            return Err(bad("dimension field must be 0 for a bare forest"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let nv = u32_at(8) as usize;
        let ns = u32_at(12) as usize;
        let expected = 16 + nv * 17 + (ns + 1) * 4;
        if bytes.len() != expected {
            return Err(bad("length does not match header counts"));
        }
        let read_u32s = |start: usize, len: usize| -> Vec<u32> {
            (0..len).map(|i| u32_at(start + 4 * i)).collect()
        };
        let mut o = 16;
        let parent = read_u32s(o, nv);
        o += 4 * nv;
        let depth = read_u32s(o, nv);
        o += 4 * nv;
        let spine_index = read_u32s(o, nv);
        o += 4 * nv;
        let is_spine = bytes[o..o + nv].iter().map(|&b| b != 0).collect();
        o += nv;
        let offspring = read_u32s(o, nv);
        o += 4 * nv;
        let subtree_offsets = read_u32s(o, ns + 1);
        let f = Forest {
            parent,
            depth,
            spine_index,
            is_spine,
            offspring,
            subtree_offsets,
        };
        f.validate(1.0).map_err(ForestError::Decode)?;
        Ok(f)
    }
}

/// Binary-lifting ancestor table over the prefix u_0..u_n.
pub struct LcaTable {
    up: Vec<Vec<u32>>,
}

impl LcaTable {
    pub fn new(forest: &Forest, n: usize) -> Self {
        let len = n + 1;
        let max_depth = forest.depth[..len].iter().copied().max().unwrap_or(0);
        let levels = (32 - max_depth.leading_zeros()).max(1) as usize;
        let mut up = Vec::with_capacity(levels);
        let base: Vec<u32> = (0..len)
            .map(|i| match forest.parent[i] {
                NO_PARENT => i as u32,
                p => p,
            })
            .collect();
        up.push(base);
        for l in 1..levels {
            let prev = &up[l - 1];
            let next: Vec<u32> = (0..len).map(|i| prev[prev[i] as usize]).collect();
            up.push(next);
        }
        Self { up }
    }

    pub fn lca(&self, forest: &Forest, i: usize, j: usize) -> usize {
        let (mut a, mut b) = if forest.depth[i] >= forest.depth[j] {
            (i, j)
        } else {
            (j, i)
        };
        let mut diff = forest.depth[a] - forest.depth[b];
        let mut l = 0;
        while diff > 0 {
            if diff & 1 == 1 {
                a = self.up[l][a] as usize;
            }
            diff >>= 1;
            l += 1;
        }
        if a == b {
            return a;
        }
        for l in (0..self.up.len()).rev() {
            let (x, y) = (self.up[l][a], self.up[l][b]);
            if x != y {
                a = x as usize;
                b = y as usize;
            }
        }
        self.up[0][a] as usize
    }

    pub fn distance(&self, forest: &Forest, i: usize, j: usize) -> u32 {
        let w = self.lca(forest, i, j);
        forest.depth[i] + forest.depth[j] - 2 * forest.depth[w]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    fn geometric() -> OffspringDistribution {
        OffspringDistribution::parse("geometric:0.5").unwrap()
    }

    #[test]
    fn hand_built_binary_word() {
        // Łukasiewicz steps (+1, −1, −1): root with two leaves.
        let t = tree_from_offspring(&[2, 0, 0]).unwrap();
        assert_eq!(t.num_vertices(), 3);
        assert_eq!(t.num_subtrees(), 1);
        assert_eq!(t.parent(1), Some(0));
        assert_eq!(t.parent(2), Some(0));
        assert_eq!(t.lukasiewicz_path(), vec![0, 1, 0, -1]);
        assert!(tree_from_offspring(&[0, 0]).is_none());
        assert!(tree_from_offspring(&[2, 0]).is_none());
    }

    #[test]
    fn spine_layout_matches_block_sizes() {
        let mu = geometric();
        let mut rng = rng_from_seed(11);
        for _ in 0..200 {
            let f = build_forest_by_vertices(&mu, 40, &mut rng).unwrap();
            let offs = f.subtree_offsets();
            assert!(f.complete_vertices() >= 40);
            assert_eq!(f.num_vertices(), f.complete_vertices() + 1);
            // u_0 = w_0 and the DFS index of w_1 is #T_0.
            assert!(f.is_spine(0));
            assert!(f.is_spine(offs[1] as usize));
            assert_eq!(f.parent(offs[1] as usize), Some(0));
            let spine: Vec<usize> = f.spine().collect();
            assert_eq!(spine.len(), f.num_subtrees() + 1);
            for (m, &w) in spine.iter().enumerate() {
                assert_eq!(w, offs[m] as usize);
                assert_eq!(f.depth(w), m as u32);
            }
            f.validate(1.0).unwrap();
        }
    }

    #[test]
    fn prefix_build_agrees_with_full_build() {
        let mu = geometric();
        for seed in 0..50 {
            let full = build_forest_by_vertices(&mu, 300, &mut rng_from_seed(seed)).unwrap();
            let pre = build_forest_prefix(&mu, 300, &mut rng_from_seed(seed)).unwrap();
            assert_eq!(pre.num_vertices(), 300);
            for i in 0..300 {
                assert_eq!(pre.parent(i), full.parent(i));
                assert_eq!(pre.depth(i), full.depth(i));
                assert_eq!(pre.spine_index(i), full.spine_index(i));
            }
            pre.validate(1.0).unwrap();
        }
    }

    #[test]
    fn subtree_build_has_requested_blocks() {
        let mu = OffspringDistribution::parse("binary").unwrap();
        let mut rng = rng_from_seed(5);
        let f = build_forest_by_subtrees(&mu, 17, DEFAULT_VERTEX_BUDGET, &mut rng).unwrap();
        assert_eq!(f.num_subtrees(), 17);
        assert!(f.is_spine(f.num_vertices() - 1));
        assert_eq!(f.depth(f.num_vertices() - 1), 17);
    }

    #[test]
    fn partial_builds_stop_at_either_limit() {
        let mu = geometric();
        let f = build_forest_until(&mu, 5, usize::MAX, &mut rng_from_seed(2));
        assert_eq!(f.num_subtrees(), 5);
        assert_eq!(f.num_vertices(), f.complete_vertices());
        let full =
            build_forest_by_subtrees(&mu, 5, DEFAULT_VERTEX_BUDGET, &mut rng_from_seed(2)).unwrap();
        assert_eq!(full.subtree_offsets(), f.subtree_offsets());
        let capped = build_forest_until(&mu, 1000, 50, &mut rng_from_seed(2));
        assert_eq!(capped.num_vertices(), 50);
        assert!(capped.num_subtrees() < 1000);
    }

    #[test]
    fn budget_is_enforced() {
        let mu = geometric();
        let mut rng = rng_from_seed(1);
        let err = build_forest_by_subtrees(&mu, 10_000, 1000, &mut rng).unwrap_err();
        assert_eq!(err, ForestError::VertexBudget { limit: 1000 });
        assert!(build_forest_by_vertices(&mu, 0, &mut rng).is_err());
    }

    #[test]
    fn distances_on_small_tree() {
        //      0
        //    1   4
        //   2 3
        let t = tree_from_offspring(&[2, 2, 0, 0, 0]).unwrap();
        assert_eq!(t.graph_distance(2, 2).unwrap(), 0);
        assert_eq!(t.graph_distance(1, 2).unwrap(), 1);
        assert_eq!(t.graph_distance(2, 3).unwrap(), 2);
        assert_eq!(t.graph_distance(2, 4).unwrap(), 3);
        assert!(t.graph_distance(0, 9).is_err());
        let lca = LcaTable::new(&t, 4);
        assert_eq!(lca.lca(&t, 2, 3), 1);
        assert_eq!(lca.lca(&t, 3, 4), 0);
        assert_eq!(lca.distance(&t, 2, 4), 3);
    }

    #[test]
    fn pair_counts_match_brute_force() {
        let mu = geometric();
        let mut rng = rng_from_seed(8);
        for _ in 0..30 {
            let f = build_forest_by_vertices(&mu, 120, &mut rng).unwrap();
            let n = 119;
            let k_max = 25;
            let fast = f
                .pair_distance_counts(n, k_max, DEFAULT_PAIR_COUNT_CEILING)
                .unwrap();
            let mut slow = vec![0u64; k_max + 1];
            for i in 0..=n {
                for j in i..=n {
                    let d = f.graph_distance(i, j).unwrap() as usize;
                    if d <= k_max {
                        slow[d] += 1;
                    }
                }
            }
            assert_eq!(fast, slow);
            assert_eq!(fast[0], n as u64 + 1);
        }
    }

    #[test]
    fn pair_counts_on_a_path() {
        // Every vertex has one child: a line graph.
        let word: Vec<u32> = std::iter::repeat_n(1, 30).chain([0]).collect();
        let t = tree_from_offspring(&word).unwrap();
        let n = 30;
        let c = t
            .pair_distance_counts(n, n, DEFAULT_PAIR_COUNT_CEILING)
            .unwrap();
        for k in 0..=n {
            assert_eq!(c[k], (n + 1 - k) as u64);
        }
        assert_eq!(
            t.pair_distance_counts(n, 3, 10).unwrap_err(),
            ForestError::ExactCeiling { n, ceiling: 10 }
        );
    }

    #[test]
    fn sampled_pair_counts_are_consistent() {
        let mu = geometric();
        let f = build_forest_by_vertices(&mu, 2000, &mut rng_from_seed(21)).unwrap();
        let n = 1999;
        let exact = f
            .pair_distance_counts(n, 40, DEFAULT_PAIR_COUNT_CEILING)
            .unwrap();
        let est = f
            .pair_distance_counts_sampled(n, 40, 400_000, &mut rng_from_seed(22))
            .unwrap();
        assert!(est.estimated);
        for k in 0..=40 {
            let tol = 4.0 * est.stderr[k] + 1e-9;
            assert!(
                (est.counts[k] - exact[k] as f64).abs() <= tol.max(2.0 * (n as f64)),
                "k={k}: {} vs {}",
                est.counts[k],
                exact[k]
            );
        }
    }

    #[test]
    fn height_stats_at_block_boundaries() {
        let mu = geometric();
        let f = build_forest_by_vertices(&mu, 500, &mut rng_from_seed(4)).unwrap();
        let s = f.height_and_spine_stats(0).unwrap();
        assert_eq!((s.zeta, s.heights.clone(), s.max_depth), (0, vec![0], 0));
        let first_end = f.subtree_offsets()[1] as usize - 1;
        let s = f.height_and_spine_stats(first_end).unwrap();
        assert_eq!(s.zeta, 0);
        for i in 0..=first_end {
            assert_eq!(s.heights[i], f.depth(i));
        }
        for (m, &w) in f.subtree_offsets().iter().enumerate() {
            let s = f.height_and_spine_stats(w as usize).unwrap();
            assert_eq!(s.zeta, m as u32);
            assert_eq!(s.heights[w as usize], 0);
        }
    }

    #[test]
    fn conditioned_small_cases() {
        let mut rng = rng_from_seed(9);
        let geo = geometric();
        let single = sample_conditioned_tree(&geo, 1, &mut rng).unwrap();
        assert_eq!(single.num_vertices(), 1);

        let bin = OffspringDistribution::parse("binary").unwrap();
        for _ in 0..100 {
            let t = sample_conditioned_tree(&bin, 3, &mut rng).unwrap();
            assert_eq!(t.parents_raw()[1..], [0, 0]);
        }
        assert_eq!(
            sample_conditioned_tree(&bin, 4, &mut rng).unwrap_err(),
            ForestError::NoTreeOfSize { n: 4 }
        );
        let no_leaves = OffspringDistribution::parse("pmf:0,1").ok();
        assert!(no_leaves.is_none());
    }

    #[test]
    fn conditioned_trees_have_exact_size() {
        let mu = OffspringDistribution::parse("poisson:1").unwrap();
        let mut rng = rng_from_seed(10);
        for n in [2, 5, 64, 1000] {
            let t = sample_conditioned_tree(&mu, n, &mut rng).unwrap();
            assert_eq!(t.num_vertices(), n);
            assert_eq!(t.num_subtrees(), 1);
            assert_eq!(t.complete_vertices(), n);
            t.validate(1.0).unwrap();
        }
    }

    #[test]
    fn acceptance_floor_is_reported() {
        let mu = geometric();
        let opts = ConditionedOptions {
            acceptance_floor: 0.5,
            max_attempts: 10,
        };
        let err = sample_conditioned_tree_with(&mu, 1000, opts, &mut rng_from_seed(1)).unwrap_err();
        assert!(matches!(err, ForestError::AcceptanceTooLow { .. }));
    }

    #[test]
    fn record_round_trip_and_corruption() {
        let mu = geometric();
        let f = build_forest_by_vertices(&mu, 200, &mut rng_from_seed(3)).unwrap();
        let bytes = f.to_bytes();
        assert_eq!(&bytes[..4], b"BRWF");
        assert_eq!(Forest::from_bytes(&bytes).unwrap(), f);
        let mut bad = bytes.clone();
        bad.pop();
        assert!(Forest::from_bytes(&bad).is_err());
        let mut bad = bytes;
        bad[16] ^= 0xFF;
        assert!(Forest::from_bytes(&bad).is_err());
    }

    #[test]
    fn progeny_jumps_agree_with_dfs_hitting_times_in_law() {
        let mu = geometric();
        let mut rng = rng_from_seed(12);
        let trials = 4000;
        let mut jump = Vec::with_capacity(trials);
        let mut dfs = Vec::with_capacity(trials);
        for _ in 0..trials {
            jump.push(total_progeny_at(&mu, &[3], &mut rng)[0] as f64);
            let f = build_forest_by_subtrees(&mu, 3, DEFAULT_VERTEX_BUDGET, &mut rng).unwrap();
            dfs.push(f.subtree_offsets()[3] as f64);
        }
        let ks = crate::stats::ks_two_sample(&jump, &dfs);
        assert!(ks.p_value > 0.001, "KS p = {}", ks.p_value);
    }
}
