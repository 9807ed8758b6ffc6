//! Critical offspring laws μ on the non-negative integers.

use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Poisson};
use thiserror::Error;

use crate::alias::AliasTable;

/// Tail mass below which an infinite pmf is cut off and renormalized.
pub const TRUNCATION_MASS: f64 = 1e-12;
const MEAN_TOLERANCE: f64 = 1e-9;
const SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum OffspringError {
    #[error("cannot parse offspring law `{0}` (expected geometric:0.5, binary, poisson:1 or pmf:p0,p1,...)")]
    Parse(String),
    #[error("invalid pmf: {0}")]
    InvalidPmf(String),
    #[error("offspring law is not critical: mean {mean}")]
    NotCritical { mean: f64 },
    #[error("offspring law has zero variance (μ = δ_1)")]
    Degenerate,
}

/// Shipped families carry a closed-form law for sums of i.i.d. draws,
/// which the generation-jump progeny sampler relies on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OffspringFamily {
    Geometric,
    Binary,
    Poisson,
    Custom,
}

#[derive(Debug, Clone)]
pub struct OffspringDistribution {
    name: String,
    family: OffspringFamily,
    pmf: Vec<f64>,
    mean: f64,
    variance: f64,
    truncation_mass: f64,
    table: AliasTable,
}

impl OffspringDistribution {
    /// μ(k) = 2^{-(k+1)}; only p = 1/2 is critical.
    pub fn geometric(p: f64) -> Result<Self, OffspringError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(OffspringError::Parse(format!("geometric:{p}")));
        }
        let mut pmf = Vec::new();
        let mut term = p;
        let mut tail = 1.0 - p;
        pmf.push(term);
        while tail >= TRUNCATION_MASS {
            term *= 1.0 - p;
            tail *= 1.0 - p;
            pmf.push(term);
        }
        Self::build(
            format!("geometric:{p}"),
            OffspringFamily::Geometric,
            pmf,
            tail,
        )
    }

    /// μ(0) = μ(2) = 1/2.
    pub fn binary() -> Result<Self, OffspringError> {
        Self::build(
            "binary".into(),
            OffspringFamily::Binary,
            vec![0.5, 0.0, 0.5],
            0.0,
        )
    }

    /// Poisson(λ) cut at k = 64 (or earlier once the tail is negligible).
    pub fn poisson(lambda: f64) -> Result<Self, OffspringError> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(OffspringError::Parse(format!("poisson:{lambda}")));
        }
        let mut pmf = Vec::new();
        let mut term = (-lambda).exp();
        let mut acc = 0.0;
        for k in 0..=64u32 {
            if k > 0 {
                term *= lambda / k as f64;
            }
            pmf.push(term);
            acc += term;
            if 1.0 - acc < TRUNCATION_MASS && k as f64 > lambda {
                break;
            }
        }
        let tail = (1.0 - acc).max(0.0);
        Self::build(
            format!("poisson:{lambda}"),
            OffspringFamily::Poisson,
            pmf,
            tail,
        )
    }

    pub fn from_pmf(name: &str, pmf: Vec<f64>) -> Result<Self, OffspringError> {
        Self::build(name.to_string(), OffspringFamily::Custom, pmf, 0.0)
    }

    /// Parses `geometric:0.5`, `binary`, `poisson:1` or `pmf:0.25,0.5,0.25`.
    pub fn parse(spec: &str) -> Result<Self, OffspringError> {
        let spec = spec.trim();
        let (head, arg) = match spec.split_once(':') {
            Some((h, a)) => (h.trim(), Some(a.trim())),
            None => (spec, None),
        };
        let num = |a: Option<&str>| -> Result<f64, OffspringError> {
            a.and_then(|s| s.parse::<f64>().ok())
                .ok_or_else(|| OffspringError::Parse(spec.to_string()))
        };
        match head {
            "geometric" => Self::geometric(arg.map_or(Ok(0.5), |a| num(Some(a)))?),
            "binary" if arg.is_none() => Self::binary(),
            "poisson" => Self::poisson(arg.map_or(Ok(1.0), |a| num(Some(a)))?),
            "pmf" => {
                let list = arg.ok_or_else(|| OffspringError::Parse(spec.to_string()))?;
                let pmf = list
                    .split(',')
                    .map(|s| s.trim().parse::<f64>())
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| OffspringError::Parse(spec.to_string()))?;
                Self::from_pmf(spec, pmf)
            }
            _ => Err(OffspringError::Parse(spec.to_string())),
        }
    }

    fn build(
        name: String,
        family: OffspringFamily,
        mut pmf: Vec<f64>,
        truncation_mass: f64,
    ) -> Result<Self, OffspringError> {
        if pmf.is_empty() {
            return Err(OffspringError::InvalidPmf("empty".into()));
        }
        if let Some(p) = pmf.iter().find(|p| !(**p >= 0.0) || !p.is_finite()) {
            return Err(OffspringError::InvalidPmf(format!("bad probability {p}")));
        }
        if truncation_mass >= 1e-12 + f64::EPSILON {
            return Err(OffspringError::InvalidPmf(format!(
                "truncation mass {truncation_mass} too large"
            )));
        }
        let total: f64 = pmf.iter().sum();
        if (total + truncation_mass - 1.0).abs() > SUM_TOLERANCE {
            return Err(OffspringError::InvalidPmf(format!("sums to {total}")));
        }
        pmf.iter_mut().for_each(|p| *p /= total);
        while pmf.len() > 1 && *pmf.last().unwrap() == 0.0 {
            pmf.pop();
        }

        let mean: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        if (mean - 1.0).abs() > MEAN_TOLERANCE {
            return Err(OffspringError::NotCritical { mean });
        }
        let second: f64 = pmf
            .iter()
            .enumerate()
            .map(|(k, p)| (k * k) as f64 * p)
            .sum();
        let variance = second - mean * mean;
        if !(variance > 1e-12) {
            return Err(OffspringError::Degenerate);
        }
        let table = AliasTable::new(&pmf).expect("validated pmf");
        Ok(Self {
            name,
            family,
            pmf,
            mean,
            variance,
            truncation_mass,
            table,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn family(&self) -> OffspringFamily {
        self.family
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    pub fn prob(&self, k: usize) -> f64 {
        self.pmf.get(k).copied().unwrap_or(0.0)
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn variance(&self) -> f64 {
        self.variance
    }

    pub fn truncation_mass(&self) -> f64 {
        self.truncation_mass
    }

    /// Σ k² μ(k), the constant C_4 of the pair-count bound.
    pub fn second_moment(&self) -> f64 {
        self.variance + self.mean * self.mean
    }

    pub fn max_offspring(&self) -> usize {
        self.pmf.len() - 1
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.table.sample(rng)
    }

    /// Sum of `g` independent draws. Closed-form for the shipped families
    /// (untruncated law, off by at most the recorded truncation mass),
    /// draw-by-draw otherwise.
    pub fn sample_sum<R: Rng + ?Sized>(&self, g: u64, rng: &mut R) -> u64 {
        if g == 0 {
            return 0;
        }
        match self.family {
            OffspringFamily::Geometric => {
                // NegBin(g, p) as a Gamma–Poisson mixture.
                let p = self.pmf[0];
                let lambda = Gamma::new(g as f64, (1.0 - p) / p)
                    .expect("valid gamma")
                    .sample(rng);
                poisson_draw(lambda, rng)
            }
            OffspringFamily::Binary => {
                2 * Binomial::new(g, 0.5).expect("valid binomial").sample(rng)
            }
            OffspringFamily::Poisson => poisson_draw(g as f64 * self.mean, rng),
            OffspringFamily::Custom => (0..g).map(|_| self.sample(rng) as u64).sum(),
        }
    }

    pub fn lukasiewicz_increment(&self) -> LukasiewiczIncrement {
        LukasiewiczIncrement {
            pmf: self.pmf.clone(),
        }
    }
}

fn poisson_draw<R: Rng + ?Sized>(lambda: f64, rng: &mut R) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    Poisson::new(lambda).expect("valid poisson").sample(rng) as u64
}

/// Law of one Łukasiewicz step: P(Y_1 = k) = μ(k + 1) for k ≥ -1.
#[derive(Debug, Clone)]
pub struct LukasiewiczIncrement {
    pmf: Vec<f64>,
}

impl LukasiewiczIncrement {
    pub fn prob(&self, k: i64) -> f64 {
        if k < -1 {
            return 0.0;
        }
        self.pmf.get((k + 1) as usize).copied().unwrap_or(0.0)
    }

    pub fn support(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.pmf.iter().enumerate().map(|(j, &p)| (j as i64 - 1, p))
    }

    pub fn mean(&self) -> f64 {
        self.support().map(|(k, p)| k as f64 * p).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn shipped_laws_have_documented_moments() {
        let g = OffspringDistribution::parse("geometric:0.5").unwrap();
        // The 1e-12 tail cut moves Σ k²μ(k) by roughly k_max² · 1e-12.
        assert!((g.variance() - 2.0).abs() < 1e-7);
        assert!((g.second_moment() - 3.0).abs() < 1e-7);
        assert!(g.truncation_mass() < 1e-12);
        assert!((g.prob(0) - 0.5).abs() < 1e-11);

        let b = OffspringDistribution::parse("binary").unwrap();
        assert_eq!(b.variance(), 1.0);
        assert_eq!(b.pmf(), &[0.5, 0.0, 0.5]);

        let p = OffspringDistribution::parse("poisson:1").unwrap();
        assert!((p.variance() - 1.0).abs() < 1e-9);
        assert!(p.max_offspring() <= 64);
        assert!(p.truncation_mass() < 1e-12);
    }

    #[test]
    fn rejects_invalid_laws() {
        assert!(matches!(
            OffspringDistribution::parse("geometric:0.4"),
            Err(OffspringError::NotCritical { .. })
        ));
        assert!(matches!(
            OffspringDistribution::parse("poisson:2"),
            Err(OffspringError::NotCritical { .. })
        ));
        assert_eq!(
            OffspringDistribution::parse("pmf:0,1").unwrap_err(),
            OffspringError::Degenerate
        );
        assert!(matches!(
            OffspringDistribution::parse("pmf:0.5,0.6"),
            Err(OffspringError::InvalidPmf(_))
        ));
        assert!(matches!(
            OffspringDistribution::parse("zipf:2"),
            Err(OffspringError::Parse(_))
        ));
        assert!(matches!(
            OffspringDistribution::parse("binary:3"),
            Err(OffspringError::Parse(_))
        ));
    }

    #[test]
    fn lukasiewicz_increment_is_centered() {
        for spec in ["geometric:0.5", "binary", "poisson:1", "pmf:0.3,0.4,0.3"] {
            let inc = OffspringDistribution::parse(spec)
                .unwrap()
                .lukasiewicz_increment();
            assert!(inc.mean().abs() < 1e-9, "{spec}");
            assert_eq!(inc.prob(-2), 0.0);
        }
    }

    #[test]
    fn closed_form_sums_match_moments() {
        let mut rng = rng_from_seed(3);
        for spec in ["geometric:0.5", "binary", "poisson:1", "pmf:0.3,0.4,0.3"] {
            let mu = OffspringDistribution::parse(spec).unwrap();
            let g = 50u64;
            let n = 20_000;
            let draws: Vec<f64> = (0..n).map(|_| mu.sample_sum(g, &mut rng) as f64).collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            let se = (g as f64 * mu.variance() / n as f64).sqrt();
            assert!((mean - g as f64).abs() < 5.0 * se, "{spec}: mean {mean}");
            let target = g as f64 * mu.variance();
            assert!(
                (var / target - 1.0).abs() < 0.1,
                "{spec}: var {var} vs {target}"
            );
        }
    }
}
