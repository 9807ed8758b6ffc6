//! Green's function G(x) = Σ_m P_0(S_m = x) of an aperiodic, irreducible,
//! centered step law in d ≥ 3.
//!
//! Near the origin values are computed to ~1e-12 and cached; beyond the
//! crossover radius the asymptotic C_{d,η} / J(x)^{d−2} is used.
//!
//! Two exact paths:
//! * lazy simple random walks: G(x) = d/(1−α) ∫_0^∞ Π_i e^{−u} I_{|x_i|}(u) du,
//!   integrated in log u with an asymptotic-series tail;
//! * any other law: the Fourier integral over [−π, π]^d, split into 2d
//!   pyramids with apex at the origin (Duffy), which cancels the 1/|t|²
//!   singularity, then tensor Gauss–Legendre refined until stable.

use std::io::Write;
use std::num::NonZeroUsize;
use std::sync::RwLock;

use gauss_quad::GaussLegendre;
use nalgebra::DMatrix;
use rustc_hash::FxHashMap;
use statrs::function::gamma::gamma;
use thiserror::Error;

use crate::lattice::{dist2, pack_key, LatticeStepDistribution, MAX_DIM};

pub const DEFAULT_R_EXACT: f64 = 64.0;
pub const DEFAULT_CROSSOVER_TOLERANCE: f64 = 1e-3;
pub const DEFAULT_MAX_R_EXACT: f64 = 256.0;
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum GreenError {
    #[error("the walk must be transient: dimension {0} < 3")]
    Recurrent(usize),
    #[error("step law `{0}` is periodic")]
    Periodic(String),
    #[error("step law `{0}` is not irreducible")]
    Reducible(String),
    #[error("the asymptotic form is undefined at x = 0")]
    AtOrigin,
    #[error("quadrature at {x:?} stalled: last change {change:.2e} with estimate {estimate}")]
    ToleranceNotMet {
        x: Vec<i32>,
        estimate: f64,
        change: f64,
    },
    #[error("crossover jump {jump:.2e} still above tolerance at r = {radius}")]
    Crossover { jump: f64, radius: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactMethod {
    Bessel,
    Fourier,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GreenRegime {
    Exact,
    Asymptotic,
}

#[derive(Debug, Clone, Copy)]
pub struct GreenOptions {
    /// Euclidean radius up to which exact values are used.
    pub r_exact: f64,
    /// Raise r_exact until the relative crossover jump is below
    /// `crossover_tolerance` (giving up at `max_r_exact`).
    pub auto_raise: bool,
    pub crossover_tolerance: f64,
    pub max_r_exact: f64,
    /// Absolute tolerance for the Fourier path.
    pub tolerance: f64,
    /// Force a path; by default Bessel is used whenever it applies.
    pub method: Option<ExactMethod>,
}

impl Default for GreenOptions {
    fn default() -> Self {
        Self {
            r_exact: DEFAULT_R_EXACT,
            auto_raise: true,
            crossover_tolerance: DEFAULT_CROSSOVER_TOLERANCE,
            max_r_exact: DEFAULT_MAX_R_EXACT,
            tolerance: DEFAULT_TOLERANCE,
            method: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Canon {
    /// Invariant under coordinate permutations and sign flips.
    Hyperoctahedral,
    /// G(x) = G(−x).
    Antipodal,
    None,
}

pub struct GreenEvaluator {
    dist: LatticeStepDistribution,
    dim: usize,
    sigma_inv: Vec<f64>,
    det_sigma: f64,
    c_d_eta: f64,
    r_exact: f64,
    crossover_jump: f64,
    opts: GreenOptions,
    kernel: Kernel,
    canon: Canon,
    cache: RwLock<FxHashMap<u128, f64>>,
}

enum Kernel {
    Bessel(BesselKernel),
    Fourier(FourierKernel),
}

impl GreenEvaluator {
    pub fn new(dist: LatticeStepDistribution) -> Result<Self, GreenError> {
        Self::with_options(dist, GreenOptions::default())
    }

    pub fn with_options(
        dist: LatticeStepDistribution,
        opts: GreenOptions,
    ) -> Result<Self, GreenError> {
        let dim = dist.dim();
        if dim < 3 {
            return Err(GreenError::Recurrent(dim));
        }
        if !dist.is_irreducible() {
            return Err(GreenError::Reducible(dist.name().to_string()));
        }
        if !dist.is_aperiodic() {
            return Err(GreenError::Periodic(dist.name().to_string()));
        }
        let sigma = DMatrix::from_row_slice(dim, dim, dist.covariance());
        let det_sigma = sigma.determinant();
        let inv = sigma
            .try_inverse()
            .expect("irreducible law has invertible covariance");
        let sigma_inv: Vec<f64> = (0..dim * dim).map(|k| inv[(k / dim, k % dim)]).collect();
        let c_d_eta = c_d_eta(dim, det_sigma);

        let alpha = dist.lazy_srw_alpha();
        let method = opts.method.unwrap_or(if alpha.is_some() {
            ExactMethod::Bessel
        } else {
            ExactMethod::Fourier
        });
        let kernel = match (method, alpha) {
            (ExactMethod::Bessel, Some(a)) => {
                Kernel::Bessel(BesselKernel::new(dim, a, opts.r_exact.ceil() as usize))
            }
            _ => Kernel::Fourier(FourierKernel::new(&dist)),
        };
        let canon = if alpha.is_some() {
            Canon::Hyperoctahedral
        } else if dist.is_symmetric() {
            Canon::Antipodal
        } else {
            Canon::None
        };
        let mut ev = Self {
            dist,
            dim,
            sigma_inv,
            det_sigma,
            c_d_eta,
            r_exact: opts.r_exact,
            crossover_jump: f64::NAN,
            opts,
            kernel,
            canon,
            cache: RwLock::new(FxHashMap::default()),
        };
        if opts.auto_raise {
            ev.calibrate_crossover()?;
        }
        Ok(ev)
    }

    pub fn dist(&self) -> &LatticeStepDistribution {
        &self.dist
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn c_d_eta(&self) -> f64 {
        self.c_d_eta
    }

    pub fn det_sigma(&self) -> f64 {
        self.det_sigma
    }

    pub fn sigma_inverse(&self) -> &[f64] {
        &self.sigma_inv
    }

    pub fn r_exact(&self) -> f64 {
        self.r_exact
    }

    /// Largest relative gap between exact and asymptotic values on the
    /// crossover shell (NaN if calibration did not run).
    pub fn crossover_jump(&self) -> f64 {
        self.crossover_jump
    }

    /// Absolute accuracy of exact-path values.
    pub fn tolerance(&self) -> f64 {
        self.opts.tolerance
    }

    pub fn exact_method(&self) -> ExactMethod {
        match self.kernel {
            Kernel::Bessel(_) => ExactMethod::Bessel,
            Kernel::Fourier(_) => ExactMethod::Fourier,
        }
    }

    /// J(x) = √(x·Σ⁻¹x).
    pub fn j_norm(&self, x: &[i32]) -> f64 {
        let d = self.dim;
        let mut q = 0.0;
        for i in 0..d {
            let mut row = 0.0;
            for j in 0..d {
                row += self.sigma_inv[i * d + j] * x[j] as f64;
            }
            q += x[i] as f64 * row;
        }
        q.sqrt()
    }

    pub fn green_asymptotic(&self, x: &[i32]) -> Result<f64, GreenError> {
        assert_eq!(x.len(), self.dim);
        if x.iter().all(|&c| c == 0) {
            return Err(GreenError::AtOrigin);
        }
        Ok(self.c_d_eta / self.j_norm(x).powi(self.dim as i32 - 2))
    }

    fn canonical(&self, x: &[i32]) -> ([i32; MAX_DIM], usize) {
        let d = self.dim;
        let mut buf = [0i32; MAX_DIM];
        buf[..d].copy_from_slice(x);
        match self.canon {
            Canon::Hyperoctahedral => {
                buf[..d].iter_mut().for_each(|c| *c = c.abs());
                buf[..d].sort_unstable();
            }
            Canon::Antipodal => {
                let neg = buf[..d].iter().find(|&&c| c != 0).is_some_and(|&c| c < 0);
                if neg {
                    buf[..d].iter_mut().for_each(|c| *c = -*c);
                }
            }
            Canon::None => {}
        }
        (buf, d)
    }

    /// Exact value (cached). Accepts any x, though points far outside the
    /// crossover radius are slow.
    pub fn green_exact(&self, x: &[i32]) -> Result<f64, GreenError> {
        assert_eq!(x.len(), self.dim);
        let (buf, d) = self.canonical(x);
        let key = pack_key(&buf[..d]);
        if let Some(&v) = self.cache.read().unwrap().get(&key) {
            return Ok(v);
        }
        let v = self.compute_exact(&buf[..d])?;
        self.cache.write().unwrap().insert(key, v);
        Ok(v)
    }

    fn compute_exact(&self, x: &[i32]) -> Result<f64, GreenError> {
        match &self.kernel {
            Kernel::Bessel(k) => {
                let kmax = x
                    .iter()
                    .map(|c| c.unsigned_abs() as usize)
                    .max()
                    .unwrap_or(0);
                if kmax <= k.kmax {
                    Ok(k.eval(x))
                } else {
                    Ok(BesselKernel::new(self.dim, k.alpha, kmax).eval(x))
                }
            }
            Kernel::Fourier(k) => k.eval(&self.dist, x, self.opts.tolerance),
        }
    }

    /// Exact inside r_exact, asymptotic outside.
    #[inline]
    pub fn green(&self, x: &[i32]) -> f64 {
        self.green_with_regime(x).0
    }

    pub fn green_with_regime(&self, x: &[i32]) -> (f64, GreenRegime) {
        let r2 = dist2(x, &[0; MAX_DIM][..x.len()]) as f64;
        if r2 <= self.r_exact * self.r_exact {
            let v = match self.green_exact(x) {
                Ok(v) => v,
                Err(GreenError::ToleranceNotMet { estimate, .. }) => estimate,
                Err(e) => panic!("exact Green evaluation failed: {e}"),
            };
            (v, GreenRegime::Exact)
        } else {
            (
                self.green_asymptotic(x).expect("x ≠ 0 outside r_exact"),
                GreenRegime::Asymptotic,
            )
        }
    }

    /// G(a, b) = G(b − a).
    #[inline]
    pub fn green_between(&self, a: &[i32], b: &[i32]) -> f64 {
        let mut diff = [0i32; MAX_DIM];
        for (k, (&p, &q)) in a.iter().zip(b).enumerate() {
            diff[k] = q - p;
        }
        self.green(&diff[..a.len()])
    }

    /// G(x) − Σ_y η(y) G(x + y) − 1{x = 0}, using exact values.
    pub fn harmonicity_residual(&self, x: &[i32]) -> Result<f64, GreenError> {
        let mut sum = 0.0;
        let mut y_plus = vec![0i32; self.dim];
        for (y, p) in self.dist.support() {
            for k in 0..self.dim {
                y_plus[k] = x[k] + y[k];
            }
            sum += p * self.green_exact(&y_plus)?;
        }
        let delta = if x.iter().all(|&c| c == 0) { 1.0 } else { 0.0 };
        Ok(self.green_exact(x)? - sum - delta)
    }

    fn shell_points(&self, r: f64) -> Vec<Vec<i32>> {
        let d = self.dim;
        let mut pts = Vec::new();
        for m in 1..=d {
            // Points along the diagonals of the first m coordinates.
            let c = (r / (m as f64).sqrt()).floor() as i32;
            let mut p = vec![0; d];
            p[..m].iter_mut().for_each(|v| *v = c);
            pts.push(p);
        }
        pts
    }

    fn crossover_gap(&self, r: f64) -> Result<f64, GreenError> {
        let mut jump: f64 = 0.0;
        for p in self.shell_points(r) {
            let exact = self.compute_exact(&p)?;
            let asym = self.green_asymptotic(&p)?;
            jump = jump.max(((exact - asym) / exact).abs());
        }
        Ok(jump)
    }

    fn calibrate_crossover(&mut self) -> Result<(), GreenError> {
        let mut r = self.r_exact;
        loop {
            let jump = self.crossover_gap(r)?;
            if jump < self.opts.crossover_tolerance {
                self.crossover_jump = jump;
                break;
            }
            if r >= self.opts.max_r_exact {
                return Err(GreenError::Crossover { jump, radius: r });
            }
            r = (r * 1.25).min(self.opts.max_r_exact);
        }
        if r > self.r_exact {
            self.r_exact = r;
            if let Kernel::Bessel(k) = &self.kernel {
                self.kernel =
                    Kernel::Bessel(BesselKernel::new(self.dim, k.alpha, r.ceil() as usize));
            }
        }
        Ok(())
    }

    /// Fills the cache for every point with |x| ≤ radius.
    pub fn warm_up(&self, radius: f64) -> Result<usize, GreenError> {
        let mut count = 0;
        for p in ball_points(self.dim, radius) {
            let (buf, d) = self.canonical(&p);
            if buf[..d] == p[..] {
                self.green_exact(&p)?;
                count += 1;
            }
        }
        Ok(count)
    }

    pub fn cached_len(&self) -> usize {
        self.cache.read().unwrap().len()
    }

    /// Writes `x1,..,xd,G` for every lattice point with |x| ≤ radius.
    pub fn write_exact_table_csv<W: Write>(
        &self,
        out: W,
        radius: f64,
    ) -> Result<(), Box<dyn std::error::Error>> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (1..=self.dim).map(|i| format!("x{i}")).collect();
        header.push("G".into());
        w.write_record(&header)?;
        for p in ball_points(self.dim, radius) {
            let g = self.green_exact(&p)?;
            let mut row: Vec<String> = p.iter().map(|c| c.to_string()).collect();
            row.push(format!("{g:.15e}"));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// C_{d,η} = Γ(d/2) / ((d−2) π^{d/2} √det Σ).
pub fn c_d_eta(dim: usize, det_sigma: f64) -> f64 {
    let d = dim as f64;
    gamma(d / 2.0) / ((d - 2.0) * std::f64::consts::PI.powf(d / 2.0) * det_sigma.sqrt())
}

/// Lattice points in the closed Euclidean ball of the given radius.
pub fn ball_points(dim: usize, radius: f64) -> Vec<Vec<i32>> {
    let r = radius.floor() as i32;
    let r2 = radius * radius;
    let mut out = Vec::new();
    let mut p = vec![-r; dim];
    loop {
        if p.iter().map(|&c| (c as f64).powi(2)).sum::<f64>() <= r2 {
            out.push(p.clone());
        }
        let mut i = 0;
        loop {
            if i == dim {
                return out;
            }
            if p[i] < r {
                p[i] += 1;
                break;
            }
            p[i] = -r;
            i += 1;
        }
    }
}

fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    GaussLegendre::new(NonZeroUsize::new(n).unwrap())
        .as_node_weight_pairs()
        .to_vec()
}

/// e^{−u} I_k(u) for k = 0..=kmax by Miller's backward recurrence,
/// normalized with e^{−u}(I_0 + 2 Σ_{k≥1} I_k) = 1.
pub fn scaled_bessel_i(u: f64, kmax: usize) -> Vec<f64> {
    assert!(u > 0.0);
    let start = kmax + 30 + (9.0 * u.sqrt()).ceil() as usize;
    let mut out = vec![0.0; kmax + 1];
    let (mut above, mut cur) = (0.0f64, 1e-300f64);
    let mut norm = 0.0;
    for k in (1..=start).rev() {
        let below = above + (2.0 * k as f64 / u) * cur;
        above = cur;
        cur = below;
        // `above` is I_k, `cur` is I_{k−1}.
        norm += 2.0 * above;
        if k - 1 <= kmax {
            out[k - 1] = cur;
        }
        // One step multiplies by at most 2k/u ≤ ~1e18, so this cannot overflow.
        if cur > 1e150 {
            let s = 1e-150;
            cur *= s;
            above *= s;
            norm *= s;
            out.iter_mut().for_each(|v| *v *= s);
        }
    }
    norm += cur;
    out.iter_mut().for_each(|v| *v /= norm);
    out
}

/// Coefficients c_j with e^{−u} I_k(u) ≈ (2πu)^{−1/2} Σ_j c_j u^{−j}.
fn bessel_series(k: usize, terms: usize) -> Vec<f64> {
    let mut c = Vec::with_capacity(terms);
    let mut a = 1.0;
    let mu = 4.0 * (k as f64).powi(2);
    c.push(1.0);
    for j in 1..terms {
        a *= -(mu - ((2 * j - 1) as f64).powi(2)) / (8.0 * j as f64);
        c.push(a);
    }
    c
}

struct BesselKernel {
    dim: usize,
    alpha: f64,
    kmax: usize,
    // w · u at each node in log u.
    weights: Vec<f64>,
    // table[k * nodes + node] = e^{−u} I_k(u).
    table: Vec<f64>,
    series: Vec<Vec<f64>>,
    upper: f64,
}

const SERIES_TERMS: usize = 12;
const U_MIN: f64 = 1e-14;
const GL_NODES: usize = 24;

impl BesselKernel {
    fn new(dim: usize, alpha: f64, kmax: usize) -> Self {
        let upper = (64.0 * (kmax * kmax) as f64).max(1e4);
        let (lo, hi) = (U_MIN.ln(), upper.ln());
        let panels = (hi - lo).ceil() as usize;
        let h = (hi - lo) / panels as f64;
        let rule = gauss_legendre(GL_NODES);
        let mut us = Vec::with_capacity(panels * GL_NODES);
        let mut weights = Vec::with_capacity(panels * GL_NODES);
        for p in 0..panels {
            let a = lo + p as f64 * h;
            for &(t, w) in &rule {
                let s = a + (t + 1.0) * h / 2.0;
                let u = s.exp();
                us.push(u);
                weights.push(w * h / 2.0 * u);
            }
        }
        let nodes = us.len();
        let mut table = vec![0.0; (kmax + 1) * nodes];
        for (n, &u) in us.iter().enumerate() {
            for (k, v) in scaled_bessel_i(u, kmax).into_iter().enumerate() {
                table[k * nodes + n] = v;
            }
        }
        let series = (0..=kmax).map(|k| bessel_series(k, SERIES_TERMS)).collect();
        Self {
            dim,
            alpha,
            kmax,
            weights,
            table,
            series,
            upper,
        }
    }

    fn eval(&self, x: &[i32]) -> f64 {
        let nodes = self.weights.len();
        let ks: Vec<usize> = x.iter().map(|c| c.unsigned_abs() as usize).collect();
        let mut body = 0.0;
        for n in 0..nodes {
            let mut prod = self.weights[n];
            for &k in &ks {
                prod *= self.table[k * nodes + n];
            }
            body += prod;
        }
        // Tail: multiply the per-coordinate series, integrate termwise.
        let mut poly = vec![0.0; SERIES_TERMS];
        poly[0] = 1.0;
        for &k in &ks {
            let s = &self.series[k];
            let mut next = vec![0.0; SERIES_TERMS];
            for (i, &a) in poly.iter().enumerate() {
                for (j, &b) in s.iter().enumerate().take(SERIES_TERMS - i) {
                    next[i + j] += a * b;
                }
            }
            poly = next;
        }
        let half_d = self.dim as f64 / 2.0;
        let u = self.upper;
        let tail: f64 = poly
            .iter()
            .enumerate()
            .map(|(n, &p)| p * u.powf(1.0 - half_d - n as f64) / (half_d + n as f64 - 1.0))
            .sum::<f64>()
            * (2.0 * std::f64::consts::PI).powf(-half_d);
        self.dim as f64 / (1.0 - self.alpha) * (body + tail)
    }
}

struct FourierKernel {
    steps: Vec<(Vec<f64>, f64)>,
    symmetric: bool,
    dim: usize,
}

impl FourierKernel {
    fn new(dist: &LatticeStepDistribution) -> Self {
        let steps = dist
            .support()
            .map(|(y, p)| (y.iter().map(|&c| c as f64).collect(), p))
            .collect();
        Self {
            steps,
            symmetric: dist.is_symmetric(),
            dim: dist.dim(),
        }
    }

    /// Re[e^{−i t·x} / (1 − φ(t))].
    #[inline]
    fn integrand(&self, t: &[f64], x: &[f64]) -> f64 {
        let tx: f64 = t.iter().zip(x).map(|(a, b)| a * b).sum();
        if self.symmetric {
            let mut one_minus = 0.0;
            for (y, p) in &self.steps {
                let ty: f64 = t.iter().zip(y).map(|(a, b)| a * b).sum();
                one_minus += p * (1.0 - ty.cos());
            }
            tx.cos() / one_minus
        } else {
            let (mut re, mut im) = (0.0, 0.0);
            for (y, p) in &self.steps {
                let ty: f64 = t.iter().zip(y).map(|(a, b)| a * b).sum();
                re += p * (1.0 - ty.cos());
                im -= p * ty.sin();
            }
            // e^{−i tx} / (re + i im)
            let (c, s) = (tx.cos(), -tx.sin());
            (c * re + s * im) / (re * re + im * im)
        }
    }

    fn quadrature(&self, x: &[i32], n: usize) -> f64 {
        let d = self.dim;
        let xf: Vec<f64> = x.iter().map(|&c| c as f64).collect();
        let rule = gauss_legendre(n);
        let pi = std::f64::consts::PI;
        let mut total = 0.0;
        let mut t = vec![0.0; d];
        let mut idx = vec![0usize; d - 1];
        for axis in 0..d {
            for sign in [1.0, -1.0] {
                for &(tv, wv) in &rule {
                    let v = (tv + 1.0) / 2.0;
                    let wv = wv / 2.0;
                    let jac = pi.powi(d as i32) * v.powi(d as i32 - 1) * wv;
                    idx.iter_mut().for_each(|i| *i = 0);
                    loop {
                        let mut wprod = jac;
                        t[axis] = sign * pi * v;
                        let mut c = 0;
                        for (k, tk) in t.iter_mut().enumerate() {
                            if k == axis {
                                continue;
                            }
                            let (node, w) = rule[idx[c]];
                            *tk = pi * v * node;
                            wprod *= w;
                            c += 1;
                        }
                        total += wprod * self.integrand(&t, &xf);
                        let mut i = 0;
                        loop {
                            if i == d - 1 {
                                break;
                            }
                            idx[i] += 1;
                            if idx[i] < n {
                                break;
                            }
                            idx[i] = 0;
                            i += 1;
                        }
                        if i == d - 1 {
                            break;
                        }
                    }
                }
            }
        }
        total / (2.0 * pi).powi(d as i32)
    }

    fn eval(
        &self,
        _dist: &LatticeStepDistribution,
        x: &[i32],
        tol: f64,
    ) -> Result<f64, GreenError> {
        let l1: usize = x.iter().map(|c| c.unsigned_abs() as usize).sum();
        let max_evals = 4e8 / self.steps.len() as f64;
        let mut n = 12 + l1;
        let mut prev = self.quadrature(x, n);
        loop {
            let next_n = n * 3 / 2 + 2;
            if 2.0 * self.dim as f64 * (next_n as f64).powi(self.dim as i32) > max_evals {
                return Err(GreenError::ToleranceNotMet {
                    x: x.to_vec(),
                    estimate: prev,
                    change: f64::NAN,
                });
            }
            let cur = self.quadrature(x, next_n);
            let change = (cur - prev).abs();
            if change < tol {
                return Ok(cur);
            }
            n = next_n;
            prev = cur;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lazy(d: usize) -> GreenEvaluator {
        GreenEvaluator::new(LatticeStepDistribution::lazy_srw(d, 0.5).unwrap()).unwrap()
    }

    #[test]
    fn scaled_bessel_matches_series_and_small_argument() {
        // e^{−u} I_0(u) at u = 1: I_0(1) = 1.2660658777520082.
        let v = scaled_bessel_i(1.0, 3);
        assert!((v[0] - 1.266_065_877_752_008_2 * (-1.0f64).exp()).abs() < 1e-15);
        // I_1(1) = 0.5651591039924851.
        assert!((v[1] - 0.565_159_103_992_485_1 * (-1.0f64).exp()).abs() < 1e-15);
        let u = 5000.0;
        let v = scaled_bessel_i(u, 4);
        for (k, &got) in v.iter().enumerate() {
            let s: f64 = bessel_series(k, 8)
                .iter()
                .enumerate()
                .map(|(j, c)| c / u.powi(j as i32))
                .sum();
            let want = s / (2.0 * std::f64::consts::PI * u).sqrt();
            assert!(((got - want) / want).abs() < 1e-13, "k={k}");
        }
    }

    #[test]
    fn srw_origin_matches_known_constant() {
        // Return-visit expectation of the simple walk in Z^3.
        let g = lazy(3).green_exact(&[0, 0, 0]).unwrap();
        assert!((g / 2.0 - 1.516_386_059_151_978).abs() < 1e-12, "{g}");
    }

    #[test]
    fn constant_for_identity_covariance() {
        assert!((c_d_eta(3, 1.0) - 1.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
        let ev = lazy(3);
        let direct = gamma(1.5) / (std::f64::consts::PI.powf(1.5) * (1.0f64 / 216.0).sqrt());
        assert!((ev.c_d_eta() - direct).abs() < 1e-12 * direct);
    }

    #[test]
    fn asymptotic_homogeneity_and_origin() {
        let ev = lazy(4);
        let a = ev.green_asymptotic(&[3, 1, 0, 2]).unwrap();
        let b = ev.green_asymptotic(&[6, 2, 0, 4]).unwrap();
        assert!((b - a / 4.0).abs() < 1e-15);
        assert_eq!(
            ev.green_asymptotic(&[0, 0, 0, 0]),
            Err(GreenError::AtOrigin)
        );
    }

    #[test]
    fn harmonic_off_origin_and_at_origin() {
        for d in [3, 4, 5] {
            let ev = lazy(d);
            let mut x = vec![0; d];
            assert!(ev.harmonicity_residual(&x).unwrap().abs() < 1e-11);
            x[0] = 3;
            x[d - 1] = -2;
            assert!(ev.harmonicity_residual(&x).unwrap().abs() < 1e-11);
            assert!(ev.green(&vec![0; d]) > 1.0);
        }
    }

    #[test]
    fn fourier_path_agrees_with_bessel_path() {
        let dist = LatticeStepDistribution::lazy_srw(3, 0.5).unwrap();
        let opts = GreenOptions {
            method: Some(ExactMethod::Fourier),
            auto_raise: false,
            ..Default::default()
        };
        let f = GreenEvaluator::with_options(dist.clone(), opts).unwrap();
        assert_eq!(f.exact_method(), ExactMethod::Fourier);
        let b = GreenEvaluator::new(dist).unwrap();
        for x in [[0, 0, 0], [1, 0, 0], [2, 1, 0], [3, -1, 2]] {
            let (u, v) = (f.green_exact(&x).unwrap(), b.green_exact(&x).unwrap());
            assert!((u - v).abs() < 1e-8, "{x:?}: {u} vs {v}");
        }
    }

    #[test]
    fn laziness_rescales_visit_counts() {
        let quarter =
            GreenEvaluator::new(LatticeStepDistribution::lazy_srw(3, 0.25).unwrap()).unwrap();
        let half = lazy(3);
        for x in [[0, 0, 0], [1, 1, 0], [4, 0, 1]] {
            let a = quarter.green_exact(&x).unwrap() * 0.75;
            let b = half.green_exact(&x).unwrap() * 0.5;
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_and_cached() {
        let ev = lazy(3);
        let a = ev.green(&[2, -3, 1]);
        assert_eq!(a, ev.green(&[-2, 3, -1]));
        assert_eq!(a, ev.green(&[1, 2, 3]));
        assert!(ev.cached_len() >= 1);
    }

    #[test]
    fn crossover_is_continuous() {
        for d in [3, 4, 5] {
            let ev = lazy(d);
            assert!(ev.crossover_jump() < DEFAULT_CROSSOVER_TOLERANCE, "d={d}");
            assert!(ev.r_exact() >= DEFAULT_R_EXACT);
        }
    }

    #[test]
    fn periodic_and_low_dimensional_laws_rejected() {
        let srw = LatticeStepDistribution::srw(3).unwrap();
        assert!(matches!(
            GreenEvaluator::new(srw),
            Err(GreenError::Periodic(_))
        ));
        let flat = LatticeStepDistribution::lazy_srw(2, 0.5).unwrap();
        assert_eq!(
            GreenEvaluator::new(flat).err(),
            Some(GreenError::Recurrent(2))
        );
    }

    #[test]
    fn table_export_has_header_and_rows() {
        let ev = lazy(3);
        let mut buf = Vec::new();
        ev.write_exact_table_csv(&mut buf, 1.0).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "x1,x2,x3,G");
        assert_eq!(lines.len(), 1 + 7);
    }
}
