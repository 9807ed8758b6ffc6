use std::path::PathBuf;

use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("unknown key `{0}`")]
    UnknownKey(String),
    #[error("bad value `{value}` for `{key}`")]
    BadValue { key: String, value: String },
    #[error("line {0}: expected key=value")]
    Syntax(usize),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// R[0, n] along one forest's DFS order.
    Vertices,
    /// Ranges over the first n subtrees.
    Subtrees,
    /// A single tree conditioned to have n vertices.
    Conditioned,
}

impl Mode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mode::Vertices => "vertices",
            Mode::Subtrees => "subtrees",
            Mode::Conditioned => "conditioned",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "vertices" => Some(Mode::Vertices),
            "subtrees" => Some(Mode::Subtrees),
            "conditioned" => Some(Mode::Conditioned),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub mode: Mode,
    pub dim: usize,
    pub mu: String,
    pub theta: String,
    pub eta: String,
    pub n_min: u64,
    pub n_max: u64,
    pub ratio: f64,
    pub trials: u32,
    pub seed: u64,
    /// Compute positions and range statistics.
    pub walk: bool,
    /// Compute Green sums and capacities (implies `walk`).
    pub capacity: bool,
    pub solve_ceiling: usize,
    pub mc_walkers: usize,
    pub mc_rho: f64,
    /// Source points per Monte Carlo estimate; 0 launches from all.
    pub mc_sources: usize,
    pub mc_step_budget: u64,
    pub pair_ceiling: usize,
    pub green_samples: usize,
    pub upper_rows: usize,
    pub vertex_budget: usize,
    pub threads: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Vertices,
            dim: 3,
            mu: "geometric:0.5".into(),
            theta: "srw".into(),
            eta: "lazy-srw:0.5".into(),
            n_min: 4096,
            n_max: 262_144,
            ratio: 2.0,
            trials: 8,
            seed: 42,
            walk: true,
            capacity: true,
            solve_ceiling: 4000,
            mc_walkers: 64,
            mc_rho: 4.0,
            mc_sources: 256,
            mc_step_budget: 10_000_000,
            pair_ceiling: 20_000,
            green_samples: 1_000_000,
            upper_rows: 64,
            vertex_budget: 1 << 25,
            threads: 0,
            out: PathBuf::from("results.csv"),
        }
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s {
        "true" | "yes" | "1" | "on" => Some(true),
        "false" | "no" | "0" | "off" => Some(false),
        _ => None,
    }
}

impl ExperimentConfig {
    /// Sets one key. Keys use the CLI spelling with or without dashes
    /// (`n-min`, `n_min`).
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key_norm = key.trim().replace('_', "-");
        let value = value.trim();
        let bad = || ConfigError::BadValue {
            key: key_norm.clone(),
            value: value.to_string(),
        };
        macro_rules! num {
            () => {
                value.parse().map_err(|_| bad())?
            };
        }
        match key_norm.as_str() {
            "mode" => self.mode = Mode::parse(value).ok_or_else(bad)?,
            "dim" => self.dim = num!(),
            "mu" => self.mu = value.to_string(),
            "theta" => self.theta = value.to_string(),
            "eta" => self.eta = value.to_string(),
            "n-min" => self.n_min = num!(),
            "n-max" => self.n_max = num!(),
            "ratio" => self.ratio = num!(),
            "trials" => self.trials = num!(),
            "seed" => self.seed = num!(),
            "walk" => self.walk = parse_bool(value).ok_or_else(bad)?,
            "capacity" => self.capacity = parse_bool(value).ok_or_else(bad)?,
            "solve-ceiling" => self.solve_ceiling = num!(),
            "mc-walkers" => self.mc_walkers = num!(),
            "mc-rho" => self.mc_rho = num!(),
            "mc-sources" => self.mc_sources = num!(),
            "mc-step-budget" => self.mc_step_budget = num!(),
            "pair-ceiling" => self.pair_ceiling = num!(),
            "green-samples" => self.green_samples = num!(),
            "upper-rows" => self.upper_rows = num!(),
            "vertex-budget" => self.vertex_budget = num!(),
            "threads" => self.threads = num!(),
            "out" => self.out = PathBuf::from(value),
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Applies a flat `key = value` document; `#` starts a comment.
    pub fn apply_file(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap().trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax(i + 1))?;
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let inv = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if self.trials == 0 {
            return inv("trials must be ≥ 1");
        }
        if self.n_min == 0 || self.n_max < self.n_min {
            return inv("need 1 ≤ n_min ≤ n_max");
        }
        if !(self.ratio > 1.0) {
            return inv("grid ratio must exceed 1");
        }
        if self.mode == Mode::Conditioned && self.n_min < 1 {
            return inv("conditioned trees need n ≥ 1");
        }
        if self.capacity && !self.walk {
            return inv("capacity needs walk = true");
        }
        if self.mc_rho < 2.0 {
            return inv("mc-rho must be ≥ 2");
        }
        let grid = self.grid();
        if grid.windows(2).any(|w| w[0] >= w[1]) {
            return inv("grid is not strictly increasing");
        }
        Ok(())
    }

    /// n_min, n_min·ratio, ... (rounded, deduplicated) up to n_max.
    pub fn grid(&self) -> Vec<u64> {
        let mut out: Vec<u64> = Vec::new();
        let mut x = self.n_min as f64;
        while x <= self.n_max as f64 * (1.0 + 1e-12) {
            let n = x.round() as u64;
            if out.last().is_none_or(|&l| n > l) {
                out.push(n);
            }
            x *= self.ratio;
        }
        out
    }

    /// Canonical `key=value` lines of everything that affects results.
    pub fn canonical(&self) -> String {
        format!(
            "mode={}\ndim={}\nmu={}\ntheta={}\neta={}\nn-min={}\nn-max={}\nratio={}\ntrials={}\nseed={}\n\
             walk={}\ncapacity={}\nsolve-ceiling={}\nmc-walkers={}\nmc-rho={}\nmc-sources={}\n\
             mc-step-budget={}\npair-ceiling={}\ngreen-samples={}\nupper-rows={}\nvertex-budget={}\n",
            self.mode.as_str(),
            self.dim,
            self.mu,
            self.theta,
            self.eta,
            self.n_min,
            self.n_max,
            self.ratio,
            self.trials,
            self.seed,
            self.walk,
            self.capacity,
            self.solve_ceiling,
            self.mc_walkers,
            self.mc_rho,
            self.mc_sources,
            self.mc_step_budget,
            self.pair_ceiling,
            self.green_samples,
            self.upper_rows,
            self.vertex_budget,
        )
    }

    /// First 16 hex digits of SHA-256 over [`ExperimentConfig::canonical`].
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_and_overrides() {
        let mut c = ExperimentConfig::default();
        c.apply_file("# run\nmode = subtrees\ndim=5\nn_min=32 # small\nn-max = 1024\n")
            .unwrap();
        assert_eq!(c.mode, Mode::Subtrees);
        assert_eq!((c.dim, c.n_min, c.n_max), (5, 32, 1024));
        c.set("trials", "3").unwrap();
        assert_eq!(c.trials, 3);
        assert_eq!(c.grid(), vec![32, 64, 128, 256, 512, 1024]);
        assert!(c.validate().is_ok());
        assert!(matches!(
            c.set("colour", "red"),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            c.set("dim", "x"),
            Err(ConfigError::BadValue { .. })
        ));
        assert_eq!(c.apply_file("nonsense"), Err(ConfigError::Syntax(1)));
    }

    #[test]
    fn validation() {
        let mut c = ExperimentConfig::default();
        c.trials = 0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.ratio = 1.0;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::default();
        c.n_max = 10;
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_tracks_result_affecting_keys_only() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.out = "elsewhere.csv".into();
        b.threads = 7;
        assert_eq!(a.hash(), b.hash());
        b.seed = 43;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }

    #[test]
    fn fractional_ratio_grid() {
        let c = ExperimentConfig {
            n_min: 10,
            n_max: 40,
            ratio: 1.5,
            ..Default::default()
        };
        assert_eq!(c.grid(), vec![10, 15, 23, 34]);
    }
}
