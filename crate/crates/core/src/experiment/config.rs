//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # value distribution, uniform market
//! experiment = value_dist
//! n = 1000
//! trials = 20
//! master_seed = 7
//! market = uniform
//! delta = 0.05
//! tol.ks_ysum = 0.05
//! tol.pass_fraction = 0.9
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{MmlError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    ValueDist,
    RankDist,
    Hyperbola,
    ApproxStable,
    Imbalance,
    StableCount,
    Bounds,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::ValueDist,
        ExperimentKind::RankDist,
        ExperimentKind::Hyperbola,
        ExperimentKind::ApproxStable,
        ExperimentKind::Imbalance,
        ExperimentKind::StableCount,
        ExperimentKind::Bounds,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ValueDist => "value_dist",
            ExperimentKind::RankDist => "rank_dist",
            ExperimentKind::Hyperbola => "hyperbola",
            ExperimentKind::ApproxStable => "approx_stable",
            ExperimentKind::Imbalance => "imbalance",
            ExperimentKind::StableCount => "stable_count",
            ExperimentKind::Bounds => "bounds",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Self::ALL.iter().map(|k| k.name()).collect();
                format!("unknown experiment `{s}`, expected one of {}", names.join(", "))
            })
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Market family; `c` bounds the raw score ratio for the random families.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MarketSpec {
    Uniform,
    /// Random public scores, log-uniform on `[1/c, c]`.
    PublicScores { c: f64 },
    /// Independent log-uniform raw scores on `[1/c, c]`.
    CBounded { c: f64 },
}

impl fmt::Display for MarketSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MarketSpec::Uniform => f.write_str("uniform"),
            MarketSpec::PublicScores { c } => write!(f, "public_scores(c={c})"),
            MarketSpec::CBounded { c } => write!(f, "cbounded(c={c})"),
        }
    }
}

/// Validated experiment configuration.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    /// Market size; the number of women for `imbalance`.
    pub n: usize,
    pub trials: u64,
    pub master_seed: u64,
    pub market: MarketSpec,
    /// Truncation level; 0 disables truncation.
    pub delta: f64,
    /// Missing men for `imbalance`, random partner swaps for `approx_stable`.
    pub k: usize,
    /// Threshold used by the dispersion statistic.
    pub zeta: f64,
    /// Threshold used by the rank-to-value ratio statistic.
    pub theta: f64,
    /// Region constants `(c1_lo, c1_hi, c2)`; regions are skipped when unset.
    pub regions: Option<(f64, f64, f64)>,
    /// Chernoff thresholds for `bounds`.
    pub chernoff_t: Vec<f64>,
    /// Sample size, per-law band and epsilons of the DKW check in `bounds`.
    pub dkw_n: usize,
    pub dkw_delta: f64,
    pub dkw_eps: Vec<f64>,
    pub dkw_experiments: u64,
    pub tolerances: BTreeMap<String, f64>,
    #[serde(skip)]
    pub workers: usize,
}

/// Tolerance names understood by the runner.
pub const TOLERANCE_KEYS: [&str; 12] = [
    "ks_ysum",
    "ks_fit",
    "ks_rank",
    "hyperbola",
    "dispersion",
    "rank_ratio",
    "proposals",
    "alpha",
    "lnp_lnq",
    "pass_fraction",
    "expected_count",
    "count_margin",
];

const DEFAULT_PASS_FRACTION: f64 = 0.9;

impl ExperimentConfig {
    pub fn tolerance(&self, name: &str) -> Option<f64> {
        self.tolerances.get(name).copied()
    }

    pub fn pass_fraction(&self) -> f64 {
        self.tolerance("pass_fraction").unwrap_or(DEFAULT_PASS_FRACTION)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        std::fs::read_to_string(path)?.parse()
    }

    /// Applies `MML_WORKERS` if it is set.
    pub fn with_env_overrides(mut self) -> Result<Self> {
        if let Ok(v) = std::env::var("MML_WORKERS") {
            self.workers = parse_value("MML_WORKERS", &v)?;
            if self.workers == 0 {
                return Err(MmlError::config("MML_WORKERS", "must be at least 1"));
            }
        }
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(MmlError::config("n", "must be at least 1"));
        }
        if self.trials == 0 {
            return Err(MmlError::config("trials", "must be at least 1"));
        }
        if !(self.delta >= 0.0 && self.delta < 1.0) {
            return Err(MmlError::config("delta", "must lie in [0, 1)"));
        }
        if self.workers == 0 {
            return Err(MmlError::config("workers", "must be at least 1"));
        }
        if let MarketSpec::PublicScores { c } | MarketSpec::CBounded { c } = self.market {
            if !(c >= 1.0 && c.is_finite()) {
                return Err(MmlError::config("c", "must be a finite number >= 1"));
            }
        }
        for (name, &v) in &self.tolerances {
            if !(v > 0.0 && v.is_finite()) {
                return Err(MmlError::config(format!("tol.{name}"), "must be positive"));
            }
        }
        if self.pass_fraction() > 1.0 {
            return Err(MmlError::config("tol.pass_fraction", "must be at most 1"));
        }
        if !(self.zeta > 0.0) {
            return Err(MmlError::config("zeta", "must be positive"));
        }
        if !(self.theta > 0.0) {
            return Err(MmlError::config("theta", "must be positive"));
        }
        match self.experiment {
            ExperimentKind::StableCount if self.n > crate::matching::MAX_ENUMERATE_N => {
                Err(MmlError::config(
                    "n",
                    format!("enumeration supports n <= {}", crate::matching::MAX_ENUMERATE_N),
                ))
            }
            ExperimentKind::Imbalance if self.k == 0 || self.k >= self.n => {
                Err(MmlError::config("k", "imbalance needs 1 <= k < n"))
            }
            ExperimentKind::ApproxStable if self.n < 2 => {
                Err(MmlError::config("n", "partner swaps need n >= 2"))
            }
            ExperimentKind::Bounds => {
                if self.chernoff_t.iter().any(|&t| !(t >= 0.0)) {
                    return Err(MmlError::config("chernoff_t", "thresholds must be non-negative"));
                }
                if !(self.dkw_delta > 0.0 && self.dkw_delta < 1.0) {
                    return Err(MmlError::config("dkw_delta", "must lie in (0, 1)"));
                }
                if self.dkw_eps.iter().any(|&e| !(e > 0.0)) {
                    return Err(MmlError::config("dkw_eps", "must be positive"));
                }
                if self.dkw_n == 0 || self.dkw_experiments == 0 {
                    return Err(MmlError::config("dkw_n", "sample size and experiment count must be positive"));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

fn parse_value<T: FromStr>(field: &str, raw: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    raw.parse::<T>()
        .map_err(|e| MmlError::config(field, format!("cannot parse `{raw}`: {e}")))
}

fn parse_list(field: &str, raw: &str) -> Result<Vec<f64>> {
    raw.split(',').map(|t| parse_value(field, t.trim())).collect()
}

impl FromStr for ExperimentConfig {
    type Err = MmlError;

    fn from_str(text: &str) -> Result<Self> {
        let mut kv: BTreeMap<String, String> = BTreeMap::new();
        for (k, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| MmlError::Parse {
                line: k + 1,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim().to_string();
            if kv.insert(key.clone(), value.trim().to_string()).is_some() {
                return Err(MmlError::config(key, "given more than once"));
            }
        }

        let mut take = |key: &str| kv.remove(key);
        let required = |v: Option<String>, key: &str| v.ok_or_else(|| MmlError::config(key, "missing"));

        let experiment: ExperimentKind = {
            let raw = required(take("experiment"), "experiment")?;
            raw.parse().map_err(|e: String| MmlError::config("experiment", e))?
        };
        let n = parse_value("n", &required(take("n"), "n")?)?;
        let trials = parse_value("trials", &required(take("trials"), "trials")?)?;
        let master_seed = parse_value("master_seed", &required(take("master_seed"), "master_seed")?)?;
        let c = take("c").map(|v| parse_value::<f64>("c", &v)).transpose()?;
        let market = match take("market").as_deref().unwrap_or("uniform") {
            "uniform" => MarketSpec::Uniform,
            "public_scores" => MarketSpec::PublicScores { c: c.unwrap_or(2.0) },
            "cbounded" => MarketSpec::CBounded {
                c: c.ok_or_else(|| MmlError::config("c", "required for market = cbounded"))?,
            },
            other => {
                return Err(MmlError::config(
                    "market",
                    format!("unknown market `{other}`, expected uniform, public_scores or cbounded"),
                ))
            }
        };
        let opt_f64 = |v: Option<String>, key: &str, default: f64| -> Result<f64> {
            v.map_or(Ok(default), |v| parse_value(key, &v))
        };
        let delta = opt_f64(take("delta"), "delta", 0.0)?;
        let zeta = opt_f64(take("zeta"), "zeta", 0.25)?;
        let theta = opt_f64(take("theta"), "theta", 0.5)?;
        let dkw_delta = opt_f64(take("dkw_delta"), "dkw_delta", 0.02)?;
        let k = take("k").map_or(Ok(0), |v| parse_value("k", &v))?;
        let workers = take("workers").map_or(Ok(1), |v| parse_value("workers", &v))?;
        let dkw_n = take("dkw_n").map_or(Ok(200), |v| parse_value("dkw_n", &v))?;
        let dkw_experiments = take("dkw_experiments").map_or(Ok(10_000), |v| parse_value("dkw_experiments", &v))?;
        let regions = match take("regions") {
            None => None,
            Some(v) => match parse_list("regions", &v)?[..] {
                [a, b, c] => Some((a, b, c)),
                _ => return Err(MmlError::config("regions", "expected `c1_lo, c1_hi, c2`")),
            },
        };
        let chernoff_t = take("chernoff_t").map_or(Ok(vec![0.1, 0.3, 0.5]), |v| parse_list("chernoff_t", &v))?;
        let dkw_eps = take("dkw_eps").map_or(Ok(vec![0.1, 0.2]), |v| parse_list("dkw_eps", &v))?;

        let mut tolerances = BTreeMap::new();
        let keys: Vec<String> = kv.keys().cloned().collect();
        for key in keys {
            let Some(name) = key.strip_prefix("tol.") else {
                return Err(MmlError::config(key, "unknown key"));
            };
            if !TOLERANCE_KEYS.contains(&name) {
                return Err(MmlError::config(
                    key.clone(),
                    format!("unknown tolerance, expected one of {}", TOLERANCE_KEYS.join(", ")),
                ));
            }
            let v = parse_value(&key, &kv[&key])?;
            tolerances.insert(name.to_string(), v);
        }

        let cfg = ExperimentConfig {
            experiment,
            n,
            trials,
            master_seed,
            market,
            delta,
            k,
            zeta,
            theta,
            regions,
            chernoff_t,
            dkw_n,
            dkw_delta,
            dkw_eps,
            dkw_experiments,
            tolerances,
            workers,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
