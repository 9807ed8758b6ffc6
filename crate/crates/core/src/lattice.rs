//! Finite-support step laws on Z^d, point sets, and exact m-step transition
//! tables.

use rand::Rng;
use thiserror::Error;

use crate::alias::AliasTable;

pub const MAX_DIM: usize = 8;
pub const MAX_TRANSITION_STEPS: usize = 128;
pub const MAX_TRANSITION_RADIUS: usize = 256;
/// Dense transition tables refuse to allocate more cells than this.
pub const MAX_TRANSITION_CELLS: usize = 1 << 26;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("cannot parse step law `{0}`")]
    Parse(String),
    #[error("invalid step law: {0}")]
    Invalid(String),
    #[error("step law has mean {0:?}, expected 0")]
    NotCentered(Vec<f64>),
    #[error("point of dimension {got} in a dimension-{expected} context")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("transition table too large: {0}")]
    TooLarge(String),
    #[error("coordinate {0} does not fit the packed key")]
    KeyOverflow(i64),
}

/// Points of Z^d stored as a flat coordinate array.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticePoints {
    dim: usize,
    coords: Vec<i32>,
}

impl LatticePoints {
    pub fn new(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension {dim} unsupported");
        Self {
            dim,
            coords: Vec::new(),
        }
    }

    pub fn with_capacity(dim: usize, n: usize) -> Self {
        let mut p = Self::new(dim);
        p.coords.reserve(n * dim);
        p
    }

    pub fn from_flat(dim: usize, coords: Vec<i32>) -> Result<Self, LatticeError> {
        if dim == 0 || dim > MAX_DIM || coords.len() % dim != 0 {
            return Err(LatticeError::DimensionMismatch {
                expected: dim,
                got: coords.len(),
            });
        }
        Ok(Self { dim, coords })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn push(&mut self, p: &[i32]) {
        assert_eq!(p.len(), self.dim);
        self.coords.extend_from_slice(p);
    }

    #[inline]
    pub fn get(&self, i: usize) -> &[i32] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[i32]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn flat(&self) -> &[i32] {
        &self.coords
    }

    pub fn truncate(&mut self, n: usize) {
        self.coords.truncate(n * self.dim);
    }

    /// Distinct points in first-occurrence order.
    pub fn dedup(&self) -> LatticePoints {
        let mut seen = rustc_hash::FxHashSet::default();
        let mut out = LatticePoints::with_capacity(self.dim, self.len());
        for p in self.iter() {
            if seen.insert(pack_key(p)) {
                out.push(p);
            }
        }
        out
    }

    pub fn translate(&self, z: &[i32]) -> LatticePoints {
        assert_eq!(z.len(), self.dim);
        let coords = self
            .coords
            .chunks_exact(self.dim)
            .flat_map(|p| p.iter().zip(z).map(|(a, b)| a + b))
            .collect();
        LatticePoints {
            dim: self.dim,
            coords,
        }
    }

    /// Largest Euclidean distance between two points (0 for ≤ 1 point).
    /// Quadratic; meant for the sizes a capacity solve can handle, larger
    /// sets use [`LatticePoints::diameter_bound`].
    pub fn diameter(&self) -> f64 {
        let n = self.len();
        let mut best = 0i64;
        for i in 0..n {
            for j in i + 1..n {
                best = best.max(dist2(self.get(i), self.get(j)));
            }
        }
        (best as f64).sqrt()
    }

    /// Upper bound on the diameter: twice the largest distance to the
    /// centroid. Linear time.
    pub fn diameter_bound(&self) -> f64 {
        let c = self.centroid();
        let r2 = self
            .iter()
            .map(|p| {
                p.iter()
                    .zip(&c)
                    .map(|(&a, b)| (a as f64 - b).powi(2))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        2.0 * r2.sqrt()
    }

    pub fn centroid(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.dim];
        for p in self.iter() {
            for (ci, &x) in c.iter_mut().zip(p) {
                *ci += x as f64;
            }
        }
        let n = self.len().max(1) as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    }
}

#[inline]
pub fn dist2(a: &[i32], b: &[i32]) -> i64 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x as i64 - y as i64).pow(2))
        .sum()
}

#[inline]
fn key_bits(dim: usize) -> u32 {
    (128 / dim as u32).min(32)
}

/// Packs a point into a u128 hash key. Each coordinate gets 128/d bits
/// (25 bits for d = 5), far beyond any displacement simulated here.
#[inline]
pub fn pack_key(p: &[i32]) -> u128 {
    let bits = key_bits(p.len());
    let offset = 1i64 << (bits - 1);
    let mut key = 0u128;
    for &x in p {
        let v = x as i64 + offset;
        debug_assert!(v >= 0 && v < (1i64 << bits), "coordinate {x} overflows key");
        key = (key << bits) | v as u128;
    }
    key
}

/// Checked variant of [`pack_key`].
pub fn try_pack_key(p: &[i32]) -> Result<u128, LatticeError> {
    let bits = key_bits(p.len());
    let limit = 1i64 << (bits - 1);
    if let Some(&x) = p
        .iter()
        .find(|&&x| (x as i64) < -limit || (x as i64) >= limit)
    {
        return Err(LatticeError::KeyOverflow(x as i64));
    }
    Ok(pack_key(p))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepFamily {
    Srw,
    LazySrw { alpha: f64 },
    UniformBox { radius: u32 },
    Custom,
}

#[derive(Debug, Clone)]
pub struct LatticeStepDistribution {
    name: String,
    dim: usize,
    family: StepFamily,
    steps: Vec<i32>,
    probs: Vec<f64>,
    symmetric: bool,
    irreducible: bool,
    aperiodic: bool,
    covariance: Vec<f64>,
    max_step_linf: u32,
    max_step_l2: f64,
    table: AliasTable,
}

impl LatticeStepDistribution {
    pub fn srw(dim: usize) -> Result<Self, LatticeError> {
        Self::lazy_family(dim, 0.0, StepFamily::Srw, "srw".into())
    }

    /// Holds with probability α, otherwise takes a simple random walk step.
    pub fn lazy_srw(dim: usize, alpha: f64) -> Result<Self, LatticeError> {
        if !(0.0..1.0).contains(&alpha) {
            return Err(LatticeError::Invalid(format!(
                "lazy-srw needs 0 ≤ α < 1, got {alpha}"
            )));
        }
        Self::lazy_family(
            dim,
            alpha,
            StepFamily::LazySrw { alpha },
            format!("lazy-srw:{alpha}"),
        )
    }

    fn lazy_family(
        dim: usize,
        alpha: f64,
        family: StepFamily,
        name: String,
    ) -> Result<Self, LatticeError> {
        check_dim(dim)?;
        let mut support = Vec::new();
        if alpha > 0.0 {
            support.push((vec![0; dim], alpha));
        }
        let q = (1.0 - alpha) / (2 * dim) as f64;
        for i in 0..dim {
            for s in [1, -1] {
                let mut e = vec![0; dim];
                e[i] = s;
                support.push((e, q));
            }
        }
        Self::build(name, dim, family, support)
    }

    /// Uniform on the ℓ∞ ball of radius r without the origin.
    pub fn uniform_box(dim: usize, radius: u32) -> Result<Self, LatticeError> {
        check_dim(dim)?;
        if radius == 0 {
            return Err(LatticeError::Invalid(
                "uniform-box radius must be ≥ 1".into(),
            ));
        }
        let side = 2 * radius as usize + 1;
        let cells = side.checked_pow(dim as u32).filter(|&c| c <= 1 << 20);
        let cells =
            cells.ok_or_else(|| LatticeError::Invalid("uniform-box support too large".into()))?;
        let q = 1.0 / (cells - 1) as f64;
        let mut support = Vec::with_capacity(cells - 1);
        for idx in 0..cells {
            let mut rem = idx;
            let p: Vec<i32> = (0..dim)
                .map(|_| {
                    let c = (rem % side) as i32 - radius as i32;
                    rem /= side;
                    c
                })
                .collect();
            if p.iter().any(|&c| c != 0) {
                support.push((p, q));
            }
        }
        Self::build(
            format!("uniform-box:{radius}"),
            dim,
            StepFamily::UniformBox { radius },
            support,
        )
    }

    /// Arbitrary finite support; probabilities are taken as given.
    pub fn custom(
        name: &str,
        dim: usize,
        support: Vec<(Vec<i32>, f64)>,
    ) -> Result<Self, LatticeError> {
        check_dim(dim)?;
        Self::build(name.to_string(), dim, StepFamily::Custom, support)
    }

    /// Parses `srw`, `lazy-srw:0.5`, `uniform-box:2` or
    /// `custom:1,0,0=0.5;-1,0,0=0.5` (points separated by `;`).
    pub fn parse(spec: &str, dim: usize) -> Result<Self, LatticeError> {
        let spec = spec.trim();
        let bad = || LatticeError::Parse(spec.to_string());
        let (head, arg) = match spec.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (spec, None),
        };
        match head {
            "srw" if arg.is_none() => Self::srw(dim),
            "lazy-srw" => {
                let a = arg.map_or(Ok(0.5), |a| a.parse::<f64>().map_err(|_| bad()))?;
                Self::lazy_srw(dim, a)
            }
            "uniform-box" => {
                let r = arg.map_or(Ok(1), |a| a.parse::<u32>().map_err(|_| bad()))?;
                Self::uniform_box(dim, r)
            }
            "custom" => {
                let body = arg.ok_or_else(bad)?;
                let mut support = Vec::new();
                for item in body.split(';').filter(|s| !s.trim().is_empty()) {
                    let (pt, p) = item.split_once('=').ok_or_else(bad)?;
                    let pt = pt
                        .split(',')
                        .map(|c| c.trim().parse::<i32>())
                        .collect::<Result<Vec<_>, _>>()
                        .map_err(|_| bad())?;
                    let p = p.trim().parse::<f64>().map_err(|_| bad())?;
                    support.push((pt, p));
                }
                Self::custom(spec, dim, support)
            }
            _ => Err(bad()),
        }
    }

    fn build(
        name: String,
        dim: usize,
        family: StepFamily,
        support: Vec<(Vec<i32>, f64)>,
    ) -> Result<Self, LatticeError> {
        let mut merged: Vec<(Vec<i32>, f64)> = Vec::with_capacity(support.len());
        for (p, q) in support {
            if p.len() != dim {
                return Err(LatticeError::DimensionMismatch {
                    expected: dim,
                    got: p.len(),
                });
            }
            if !(q >= 0.0 && q.is_finite()) {
                return Err(LatticeError::Invalid(format!("probability {q} at {p:?}")));
            }
            if q == 0.0 {
                continue;
            }
            match merged.iter_mut().find(|(x, _)| *x == p) {
                Some(e) => e.1 += q,
                None => merged.push((p, q)),
            }
        }
        if merged.is_empty() {
            return Err(LatticeError::Invalid("empty support".into()));
        }
        let total: f64 = merged.iter().map(|e| e.1).sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(LatticeError::Invalid(format!(
                "probabilities sum to {total}"
            )));
        }
        let mut mean = vec![0.0; dim];
        for (p, q) in &merged {
            for (m, &c) in mean.iter_mut().zip(p) {
                *m += q * c as f64;
            }
        }
        if mean.iter().any(|m| m.abs() > 1e-12) {
            return Err(LatticeError::NotCentered(mean));
        }
        let mut covariance = vec![0.0; dim * dim];
        for (p, q) in &merged {
            for i in 0..dim {
                for j in 0..dim {
                    covariance[i * dim + j] += q * p[i] as f64 * p[j] as f64;
                }
            }
        }
        let symmetric = merged.iter().all(|(p, q)| {
            let neg: Vec<i32> = p.iter().map(|c| -c).collect();
            merged.iter().any(|(x, r)| *x == neg && r == q)
        });
        let rows: Vec<Vec<i64>> = merged
            .iter()
            .map(|(p, _)| p.iter().map(|&c| c as i64).collect())
            .collect();
        let irreducible = lattice_index(&rows, dim) == Some(1);
        let lifted: Vec<Vec<i64>> = rows
            .iter()
            .map(|r| r.iter().copied().chain(std::iter::once(1)).collect())
            .collect();
        let aperiodic = irreducible && lattice_index(&lifted, dim + 1) == Some(1);
        let max_step_linf = merged
            .iter()
            .flat_map(|(p, _)| p.iter().map(|c| c.unsigned_abs()))
            .max()
            .unwrap_or(0);
        let max_step_l2 = merged
            .iter()
            .map(|(p, _)| (dist2(p, &vec![0; dim]) as f64).sqrt())
            .fold(0.0, f64::max);
        let probs: Vec<f64> = merged.iter().map(|e| e.1).collect();
        let steps: Vec<i32> = merged.iter().flat_map(|e| e.0.iter().copied()).collect();
        let table = AliasTable::new(&probs).expect("validated weights");
        Ok(Self {
            name,
            dim,
            family,
            steps,
            probs,
            symmetric,
            irreducible,
            aperiodic,
            covariance,
            max_step_linf,
            max_step_l2,
            table,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn family(&self) -> StepFamily {
        self.family
    }

    pub fn support_len(&self) -> usize {
        self.probs.len()
    }

    pub fn support(&self) -> impl Iterator<Item = (&[i32], f64)> + '_ {
        self.steps
            .chunks_exact(self.dim)
            .zip(self.probs.iter().copied())
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn is_irreducible(&self) -> bool {
        self.irreducible
    }

    pub fn is_aperiodic(&self) -> bool {
        self.aperiodic
    }

    /// Row-major d×d covariance matrix Σ of one step.
    pub fn covariance(&self) -> &[f64] {
        &self.covariance
    }

    pub fn max_step_linf(&self) -> u32 {
        self.max_step_linf
    }

    pub fn max_step_l2(&self) -> f64 {
        self.max_step_l2
    }

    /// Holding probability α if the law is α·δ_0 + (1−α)·SRW.
    pub fn lazy_srw_alpha(&self) -> Option<f64> {
        let d = self.dim;
        let mut alpha = 0.0;
        let mut unit = None;
        for (p, q) in self.support() {
            let nz: Vec<i32> = p.iter().copied().filter(|&c| c != 0).collect();
            match nz.as_slice() {
                [] => alpha = q,
                [c] if c.abs() == 1 => match unit {
                    None => unit = Some(q),
                    Some(u) if u == q => {}
                    Some(_) => return None,
                },
                _ => return None,
            }
        }
        let expected_len = 2 * d + usize::from(alpha > 0.0);
        (self.support_len() == expected_len).then_some(alpha)
    }

    #[inline]
    pub fn sample_step<R: Rng + ?Sized>(&self, rng: &mut R) -> &[i32] {
        let i = self.table.sample(rng);
        &self.steps[i * self.dim..(i + 1) * self.dim]
    }

    /// π_m on the box [−r, r]^d by repeated convolution. Mass pushed outside
    /// the box is dropped and reported as `leak`.
    pub fn transition_pmf(&self, m: usize, radius: usize) -> Result<TransitionPmf, LatticeError> {
        if m > MAX_TRANSITION_STEPS || radius > MAX_TRANSITION_RADIUS {
            return Err(LatticeError::TooLarge(format!(
                "m = {m} (max {MAX_TRANSITION_STEPS}), r = {radius} (max {MAX_TRANSITION_RADIUS})"
            )));
        }
        let d = self.dim;
        let side = 2 * radius + 1;
        let cells = side
            .checked_pow(d as u32)
            .filter(|&c| c <= MAX_TRANSITION_CELLS)
            .ok_or_else(|| LatticeError::TooLarge(format!("(2·{radius}+1)^{d} cells")))?;
        let mut stride = vec![1usize; d];
        for i in 1..d {
            stride[i] = stride[i - 1] * side;
        }
        let origin: usize = stride.iter().map(|s| s * radius).sum();
        let offsets: Vec<(isize, Vec<i32>, f64)> = self
            .support()
            .map(|(p, q)| {
                let off: isize = p
                    .iter()
                    .zip(&stride)
                    .map(|(&c, &s)| c as isize * s as isize)
                    .sum();
                (off, p.to_vec(), q)
            })
            .collect();

        let mut cur = vec![0.0; cells];
        let mut next = vec![0.0; cells];
        cur[origin] = 1.0;
        let mut leak = 0.0;
        let step = self.max_step_linf as usize;
        let mut coord = vec![0i32; d];
        for k in 0..m {
            // Mass after k steps lies within ℓ∞ radius k·step.
            let reach = (k * step).min(radius);
            next.iter_mut().for_each(|v| *v = 0.0);
            for_each_in_box(d, reach, &mut coord, |x| {
                let idx = (origin as isize
                    + x.iter()
                        .zip(&stride)
                        .map(|(&c, &s)| c as isize * s as isize)
                        .sum::<isize>()) as usize;
                let mass = cur[idx];
                if mass == 0.0 {
                    return;
                }
                for (off, y, q) in &offsets {
                    let inside = x
                        .iter()
                        .zip(y)
                        .all(|(&a, &b)| (a + b).unsigned_abs() as usize <= radius);
                    if inside {
                        next[(idx as isize + off) as usize] += mass * q;
                    } else {
                        leak += mass * q;
                    }
                }
            });
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(TransitionPmf {
            dim: d,
            radius,
            steps: m,
            probs: cur,
            leak,
        })
    }
}

fn check_dim(dim: usize) -> Result<(), LatticeError> {
    if (1..=MAX_DIM).contains(&dim) {
        Ok(())
    } else {
        Err(LatticeError::Invalid(format!(
            "dimension {dim} outside 1..={MAX_DIM}"
        )))
    }
}

/// Visits every x ∈ [−r, r]^d.
fn for_each_in_box(d: usize, r: usize, x: &mut [i32], mut f: impl FnMut(&[i32])) {
    let r = r as i32;
    x.iter_mut().for_each(|c| *c = -r);
    loop {
        f(x);
        let mut i = 0;
        loop {
            if i == d {
                return;
            }
            if x[i] < r {
                x[i] += 1;
                break;
            }
            x[i] = -r;
            i += 1;
        }
    }
}

/// Index [Z^cols : L] of the integer row span L, or None if L has lower
/// rank. Computed from an integer echelon form.
pub fn lattice_index(rows: &[Vec<i64>], cols: usize) -> Option<u64> {
    let mut a: Vec<Vec<i128>> = rows
        .iter()
        .map(|r| r.iter().map(|&v| v as i128).collect())
        .collect();
    let mut det: u128 = 1;
    let mut top = 0;
    for c in 0..cols {
        loop {
            // Smallest nonzero |entry| in column c at or below `top`.
            let piv = (top..a.len())
                .filter(|&r| a[r][c] != 0)
                .min_by_key(|&r| a[r][c].unsigned_abs());
            let Some(p) = piv else { return None };
            a.swap(top, p);
            let mut clean = true;
            for r in top + 1..a.len() {
                if a[r][c] != 0 {
                    let q = a[r][c] / a[top][c];
                    let (head, tail) = a.split_at_mut(r);
                    for (x, y) in tail[0].iter_mut().zip(&head[top]) {
                        *x -= q * y;
                    }
                    if tail[0][c] != 0 {
                        clean = false;
                    }
                }
            }
            if clean {
                break;
            }
        }
        det = det.checked_mul(a[top][c].unsigned_abs())?;
        top += 1;
    }
    u64::try_from(det).ok()
}

/// Exact π_m on a box, as produced by
/// [`LatticeStepDistribution::transition_pmf`].
#[derive(Debug, Clone)]
pub struct TransitionPmf {
    dim: usize,
    radius: usize,
    steps: usize,
    probs: Vec<f64>,
    leak: f64,
}

impl TransitionPmf {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Mass that left the box and was dropped.
    pub fn leak(&self) -> f64 {
        self.leak
    }

    fn index(&self, x: &[i32]) -> Option<usize> {
        let side = 2 * self.radius + 1;
        let mut idx = 0;
        for &c in x.iter().rev() {
            if c.unsigned_abs() as usize > self.radius {
                return None;
            }
            idx = idx * side + (c + self.radius as i32) as usize;
        }
        Some(idx)
    }

    pub fn get(&self, x: &[i32]) -> f64 {
        assert_eq!(x.len(), self.dim);
        self.index(x).map_or(0.0, |i| self.probs[i])
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    pub fn max_prob(&self) -> f64 {
        self.probs.iter().copied().fold(0.0, f64::max)
    }

    /// Points with positive probability.
    pub fn nonzero(&self) -> Vec<(Vec<i32>, f64)> {
        let mut out = Vec::new();
        let mut x = vec![0i32; self.dim];
        for_each_in_box(self.dim, self.radius, &mut x, |p| {
            let v = self.get(p);
            if v > 0.0 {
                out.push((p.to_vec(), v));
            }
        });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn srw_support_and_flags() {
        let s = LatticeStepDistribution::parse("srw", 3).unwrap();
        assert_eq!(s.support_len(), 6);
        assert!(s.is_symmetric() && s.is_irreducible());
        assert!(!s.is_aperiodic());
        let mut rng = rng_from_seed(1);
        for _ in 0..1000 {
            let y = s.sample_step(&mut rng);
            assert_eq!(y.iter().map(|c| c.abs()).sum::<i32>(), 1);
        }
        assert_eq!(s.lazy_srw_alpha(), Some(0.0));
    }

    #[test]
    fn lazy_and_box_are_aperiodic() {
        let l = LatticeStepDistribution::parse("lazy-srw:0.5", 4).unwrap();
        assert!(l.is_aperiodic() && l.is_irreducible() && l.is_symmetric());
        assert_eq!(l.lazy_srw_alpha(), Some(0.5));
        let cov = l.covariance();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 0.5 / 4.0 } else { 0.0 };
                assert!((cov[i * 4 + j] - want).abs() < 1e-15);
            }
        }
        let b = LatticeStepDistribution::parse("uniform-box:1", 3).unwrap();
        assert_eq!(b.support_len(), 26);
        assert!(b.is_aperiodic() && b.is_symmetric());
        assert_eq!(b.lazy_srw_alpha(), None);
    }

    #[test]
    fn echelon_detects_sublattices() {
        // Only even first coordinates: index 2.
        let rows = vec![vec![2, 0], vec![-2, 0], vec![0, 1], vec![0, -1]];
        assert_eq!(lattice_index(&rows, 2), Some(2));
        assert_eq!(lattice_index(&[vec![1, 1]], 2), None);
        assert_eq!(lattice_index(&[vec![3, 1], vec![1, 2]], 2), Some(5));
        let c = LatticeStepDistribution::parse("custom:2,0=0.25;-2,0=0.25;0,1=0.25;0,-1=0.25", 2)
            .unwrap();
        assert!(!c.is_irreducible());
    }

    #[test]
    fn rejects_bad_laws() {
        assert!(matches!(
            LatticeStepDistribution::parse("custom:1,0=1", 2),
            Err(LatticeError::NotCentered(_))
        ));
        assert!(LatticeStepDistribution::parse("custom:1,0=0.5;-1,0=0.4", 2).is_err());
        assert!(LatticeStepDistribution::parse("lazy-srw:1", 3).is_err());
        assert!(LatticeStepDistribution::parse("walk", 3).is_err());
        assert!(LatticeStepDistribution::parse("srw", 0).is_err());
    }

    #[test]
    fn transition_small_cases() {
        let s = LatticeStepDistribution::srw(3).unwrap();
        let t0 = s.transition_pmf(0, 2).unwrap();
        assert_eq!(t0.nonzero(), vec![(vec![0, 0, 0], 1.0)]);
        let t1 = s.transition_pmf(1, 2).unwrap();
        let nz = t1.nonzero();
        assert_eq!(nz.len(), 6);
        assert!(nz.iter().all(|(_, p)| (p - 1.0 / 6.0).abs() < 1e-15));
        let leaky = s.transition_pmf(3, 1).unwrap();
        assert!(leaky.leak() > 0.0);
        assert!((leaky.total() + leaky.leak() - 1.0).abs() < 1e-14);
        assert!(s.transition_pmf(200, 10).is_err());
        assert!(LatticeStepDistribution::srw(8)
            .unwrap()
            .transition_pmf(10, 256)
            .is_err());
    }

    #[test]
    fn packed_keys_are_injective_on_a_box() {
        let mut seen = std::collections::HashSet::new();
        for a in -3..=3 {
            for b in -3..=3 {
                for c in -3..=3 {
                    assert!(seen.insert(pack_key(&[a, b, c])));
                }
            }
        }
        assert!(try_pack_key(&[1 << 30, 0, 0, 0, 0]).is_err());
    }

    #[test]
    fn point_set_helpers() {
        let p = LatticePoints::from_flat(2, vec![0, 0, 3, 4, 0, 0]).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.dedup().len(), 2);
        assert_eq!(p.diameter(), 5.0);
        assert!(p.diameter_bound() >= 5.0);
        assert_eq!(p.translate(&[1, 1]).get(1), &[4, 5]);
        assert!(LatticePoints::from_flat(2, vec![1, 2, 3]).is_err());
    }
}
