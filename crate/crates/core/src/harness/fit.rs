use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::config::Mode;
use super::record::TrialRecord;
use crate::stats::ols;

#[derive(Debug, Error, PartialEq)]
pub enum FitError {
    #[error("need at least 3 grid points with data, found {0}")]
    Insufficient(usize),
    #[error("records mix modes or dimensions ({0})")]
    Mixed(String),
    #[error("unknown statistic `{0}`")]
    UnknownStatistic(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Statistic {
    NumVertices,
    MaxDepth,
    MaxAbsPos,
    RangeSize,
    #[serde(rename = "sum_L2")]
    SumL2,
    GreenSum,
    Cap,
    CapLower,
    CapUpper,
}

impl Statistic {
    pub const ALL: [Statistic; 9] = [
        Statistic::NumVertices,
        Statistic::MaxDepth,
        Statistic::MaxAbsPos,
        Statistic::RangeSize,
        Statistic::SumL2,
        Statistic::GreenSum,
        Statistic::Cap,
        Statistic::CapLower,
        Statistic::CapUpper,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Statistic::NumVertices => "num_vertices",
            Statistic::MaxDepth => "max_depth",
            Statistic::MaxAbsPos => "max_abs_pos",
            Statistic::RangeSize => "range_size",
            Statistic::SumL2 => "sum_L2",
            Statistic::GreenSum => "green_sum",
            Statistic::Cap => "cap",
            Statistic::CapLower => "cap_lower",
            Statistic::CapUpper => "cap_upper",
        }
    }

    pub fn parse(s: &str) -> Result<Self, FitError> {
        let norm = s.to_ascii_lowercase();
        let norm = if norm == "cap_value" {
            "cap".to_string()
        } else {
            norm
        };
        Statistic::ALL
            .into_iter()
            .find(|st| st.name().to_ascii_lowercase() == norm)
            .ok_or_else(|| FitError::UnknownStatistic(s.to_string()))
    }

    pub fn value(&self, r: &TrialRecord) -> Option<f64> {
        match self {
            Statistic::NumVertices => r.num_vertices.map(|v| v as f64),
            Statistic::MaxDepth => r.max_depth.map(|v| v as f64),
            Statistic::MaxAbsPos => r.max_abs_pos.map(|v| v as f64),
            Statistic::RangeSize => r.range_size.map(|v| v as f64),
            Statistic::SumL2 => r.sum_l2.map(|v| v as f64),
            Statistic::GreenSum => r.green_sum,
            Statistic::Cap => r.cap_value,
            Statistic::CapLower => r.cap_lower,
            Statistic::CapUpper => r.cap_upper,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TargetKind {
    /// |slope − target| ≤ margin
    Within,
    /// slope ≥ target − margin
    AtLeast,
    /// slope ≤ target + margin
    AtMost,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub exponent: f64,
    pub margin: f64,
    pub kind: TargetKind,
}

impl Target {
    fn new(exponent: f64, margin: f64, kind: TargetKind) -> Self {
        Self {
            exponent,
            margin,
            kind,
        }
    }

    /// How far `slope` lies outside the accepted region (0 inside it).
    pub fn violation(&self, slope: f64) -> f64 {
        let lo = self.exponent - self.margin;
        let hi = self.exponent + self.margin;
        match self.kind {
            TargetKind::Within => (lo - slope).max(slope - hi).max(0.0),
            TargetKind::AtLeast => (lo - slope).max(0.0),
            TargetKind::AtMost => (slope - hi).max(0.0),
        }
    }

    pub fn describe(&self) -> String {
        match self.kind {
            TargetKind::Within => format!("{:.3} ± {:.2}", self.exponent, self.margin),
            TargetKind::AtLeast => format!("≥ {:.3}", self.exponent - self.margin),
            TargetKind::AtMost => format!("≤ {:.3}", self.exponent + self.margin),
        }
    }
}

/// The asserted exponent of `stat` against n in `mode` for d ∈ {3, 4, 5}.
/// cap_lower and cap_upper must bracket the capacity target.
pub fn target_for(stat: Statistic, mode: Mode, dim: usize) -> Option<Target> {
    use TargetKind::*;
    if !(3..=5).contains(&dim) {
        return None;
    }
    let d = dim as f64;
    let cap = match mode {
        Mode::Vertices => ((d - 2.0) / 4.0, 0.15),
        Mode::Subtrees => ((d - 2.0) / 2.0, 0.2),
        Mode::Conditioned => ((d - 2.0) / 4.0, 0.2),
    };
    match (stat, mode) {
        (Statistic::NumVertices, Mode::Subtrees) => Some(Target::new(2.0, 0.2, Within)),
        (Statistic::MaxDepth, Mode::Vertices) => Some(Target::new(0.5, 0.1, Within)),
        (Statistic::MaxAbsPos, Mode::Vertices) => Some(Target::new(0.25, 0.08, Within)),
        (Statistic::RangeSize, Mode::Vertices) => {
            Some(Target::new((d / 4.0).min(1.0), 0.1, AtLeast))
        }
        (Statistic::SumL2, Mode::Vertices) => {
            Some(Target::new(((8.0 - d) / 4.0).max(1.0), 0.15, AtMost))
        }
        (Statistic::GreenSum, Mode::Vertices) => {
            let t = if dim == 3 { 1.25 } else { (10.0 - d) / 4.0 };
            Some(Target::new(t, 0.15, AtMost))
        }
        (Statistic::Cap, _) => Some(Target::new(cap.0, cap.1, Within)),
        (Statistic::CapLower, _) => Some(Target::new(cap.0, cap.1, AtMost)),
        (Statistic::CapUpper, _) => Some(Target::new(cap.0, cap.1, AtLeast)),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Pass,
    /// Outside the margin, but window slopes move monotonically towards
    /// the target.
    Approaching,
    Fail,
    NoTarget,
}

impl Verdict {
    pub fn as_str(&self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Approaching => "APPROACHING",
            Verdict::Fail => "FAIL",
            Verdict::NoTarget => "-",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowSlope {
    pub n_lo: u64,
    pub n_hi: u64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub statistic: Statistic,
    pub mode: String,
    pub dim: u32,
    /// (ln n, mean of ln stat) per grid point.
    pub points: Vec<(f64, f64)>,
    /// Records contributing at each point.
    pub counts: Vec<usize>,
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r_squared: f64,
    pub target: Option<Target>,
    /// Signed distance of the slope from the target exponent.
    pub deviation: Option<f64>,
    pub windows: Vec<WindowSlope>,
    pub verdict: Verdict,
}

/// OLS of the per-n mean of ln(stat) on ln n over n ∈ [n_min, n_max].
/// Failed records and non-positive values are skipped.
pub fn fit_exponent(
    records: &[TrialRecord],
    stat: Statistic,
    n_min: Option<u64>,
    n_max: Option<u64>,
) -> Result<ExponentFit, FitError> {
    let mut groups: BTreeMap<u64, Vec<f64>> = BTreeMap::new();
    let mut kind: Option<(String, u32)> = None;
    for r in records {
        if !r.ok() || n_min.is_some_and(|m| r.n < m) || n_max.is_some_and(|m| r.n > m) {
            continue;
        }
        let Some(v) = stat.value(r).filter(|v| *v > 0.0 && v.is_finite()) else {
            continue;
        };
        match &kind {
            None => kind = Some((r.mode.clone(), r.dim)),
            Some((m, d)) if *m != r.mode || *d != r.dim => {
                return Err(FitError::Mixed(format!(
                    "{m}/d={d} and {}/d={}",
                    r.mode, r.dim
                )));
            }
            _ => {}
        }
        groups.entry(r.n).or_default().push(v.ln());
    }
    if groups.len() < 3 {
        return Err(FitError::Insufficient(groups.len()));
    }
    let (mode, dim) = kind.expect("non-empty groups");
    let ns: Vec<u64> = groups.keys().copied().collect();
    let counts: Vec<usize> = groups.values().map(Vec::len).collect();
    let points: Vec<(f64, f64)> = groups
        .iter()
        .map(|(&n, v)| ((n as f64).ln(), v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    let x: Vec<f64> = points.iter().map(|p| p.0).collect();
    let y: Vec<f64> = points.iter().map(|p| p.1).collect();
    let f = ols(&x, &y).expect("≥ 3 distinct abscissae");
    let windows = window_slopes(&ns, &x, &y, 3);
    let target = Mode::parse(&mode).and_then(|m| target_for(stat, m, dim as usize));
    let verdict = match target {
        None => Verdict::NoTarget,
        Some(t) if t.violation(f.slope) == 0.0 => Verdict::Pass,
        Some(t) if approaches(&t, &windows) => Verdict::Approaching,
        Some(_) => Verdict::Fail,
    };
    Ok(ExponentFit {
        statistic: stat,
        mode,
        dim,
        points,
        counts,
        slope: f.slope,
        intercept: f.intercept,
        slope_stderr: f.slope_stderr,
        r_squared: f.r_squared,
        deviation: target.map(|t| f.slope - t.exponent),
        target,
        windows,
        verdict,
    })
}

/// Slopes over sliding windows of `width` consecutive grid points.
pub fn window_slopes(ns: &[u64], x: &[f64], y: &[f64], width: usize) -> Vec<WindowSlope> {
    if ns.len() < width || width < 2 {
        return Vec::new();
    }
    (0..=ns.len() - width)
        .filter_map(|i| {
            let f = ols(&x[i..i + width], &y[i..i + width])?;
            Some(WindowSlope {
                n_lo: ns[i],
                n_hi: ns[i + width - 1],
                slope: f.slope,
            })
        })
        .collect()
}

/// The violation shrinks from window to window (never grows) and ends
/// strictly smaller than it started.
fn approaches(t: &Target, windows: &[WindowSlope]) -> bool {
    if windows.len() < 2 {
        return false;
    }
    let v: Vec<f64> = windows.iter().map(|w| t.violation(w.slope)).collect();
    v.windows(2).all(|p| p[1] <= p[0]) && v.last() < v.first()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    use crate::seed::rng_from_seed;

    fn rec(n: u64, trial: u32, cap: f64) -> TrialRecord {
        TrialRecord {
            mode: "vertices".into(),
            dim: 5,
            n,
            trial,
            cap_value: Some(cap),
            ..Default::default()
        }
    }

    #[test]
    fn planted_power_law() {
        let recs: Vec<_> = (4..12)
            .map(|k| rec(1 << k, 0, ((1u64 << k) as f64).powf(0.75)))
            .collect();
        let f = fit_exponent(&recs, Statistic::Cap, None, None).unwrap();
        assert!((f.slope - 0.75).abs() < 1e-12);
        assert!(f.slope_stderr < 1e-10);
        assert_eq!(f.verdict, Verdict::Pass);
        assert_eq!(f.windows.len(), 6);
    }

    #[test]
    fn planted_noise_recovery() {
        let mut rng = rng_from_seed(11);
        let mut recs = Vec::new();
        for k in 6..14 {
            let n = 1u64 << k;
            for t in 0..8 {
                let noise = 1.0 + 0.05 * (2.0 * rng.random::<f64>() - 1.0) * 3f64.sqrt();
                recs.push(rec(n, t, 3.0 * (n as f64).sqrt() * noise));
            }
        }
        let f = fit_exponent(&recs, Statistic::Cap, None, None).unwrap();
        assert!((f.slope - 0.5).abs() < 0.05, "{}", f.slope);
    }

    #[test]
    fn range_filter_and_insufficient_data() {
        let recs: Vec<_> = (4..12)
            .map(|k| rec(1 << k, 0, (1u64 << k) as f64))
            .collect();
        let f = fit_exponent(&recs, Statistic::Cap, Some(64), Some(512)).unwrap();
        assert_eq!(f.points.len(), 4);
        assert_eq!(
            fit_exponent(&recs, Statistic::Cap, Some(1024), None).unwrap_err(),
            FitError::Insufficient(2)
        );
        assert_eq!(
            fit_exponent(&recs, Statistic::RangeSize, None, None).unwrap_err(),
            FitError::Insufficient(0)
        );
    }

    #[test]
    fn failed_records_are_skipped() {
        let mut recs: Vec<_> = (4..8).map(|k| rec(1 << k, 0, (1u64 << k) as f64)).collect();
        recs.push(TrialRecord {
            error_tag: "capacity".into(),
            ..rec(16, 1, 1e9)
        });
        let f = fit_exponent(&recs, Statistic::Cap, None, None).unwrap();
        assert!((f.slope - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mixed_groups_rejected() {
        let mut recs: Vec<_> = (4..8).map(|k| rec(1 << k, 0, 1.0)).collect();
        recs[1].dim = 3;
        assert!(matches!(
            fit_exponent(&recs, Statistic::Cap, None, None),
            Err(FitError::Mixed(_))
        ));
    }

    #[test]
    fn targets() {
        let t = target_for(Statistic::Cap, Mode::Vertices, 3).unwrap();
        assert_eq!((t.exponent, t.margin), (0.25, 0.15));
        let t = target_for(Statistic::Cap, Mode::Subtrees, 5).unwrap();
        assert_eq!((t.exponent, t.margin), (1.5, 0.2));
        let t = target_for(Statistic::GreenSum, Mode::Vertices, 3).unwrap();
        assert_eq!(t.exponent + t.margin, 1.4);
        let t = target_for(Statistic::GreenSum, Mode::Vertices, 4).unwrap();
        assert_eq!(t.exponent, 1.5);
        let t = target_for(Statistic::RangeSize, Mode::Vertices, 3).unwrap();
        assert!((t.exponent - t.margin - 0.65).abs() < 1e-12);
        let t = target_for(Statistic::SumL2, Mode::Vertices, 5).unwrap();
        assert_eq!(t.exponent + t.margin, 1.15);
        assert!(target_for(Statistic::Cap, Mode::Vertices, 6).is_none());
        assert!(target_for(Statistic::MaxDepth, Mode::Subtrees, 3).is_none());
    }

    #[test]
    fn violation_and_approach() {
        let t = Target::new(0.5, 0.1, TargetKind::Within);
        assert_eq!(t.violation(0.55), 0.0);
        assert!((t.violation(0.8) - 0.2).abs() < 1e-12);
        let w = |s: f64| WindowSlope {
            n_lo: 0,
            n_hi: 0,
            slope: s,
        };
        assert!(approaches(&t, &[w(0.9), w(0.8), w(0.7)]));
        assert!(!approaches(&t, &[w(0.7), w(0.8)]));
        assert!(!approaches(&t, &[w(0.7), w(0.7)]));
    }

    #[test]
    fn statistic_names_round_trip() {
        for s in Statistic::ALL {
            assert_eq!(Statistic::parse(s.name()).unwrap(), s);
        }
        assert_eq!(Statistic::parse("cap_value").unwrap(), Statistic::Cap);
        assert_eq!(Statistic::parse("SUM_L2").unwrap(), Statistic::SumL2);
        assert!(Statistic::parse("height").is_err());
    }
}
