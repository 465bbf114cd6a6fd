//! Aggregation of trial records, tolerance checks and output files.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind};
use super::runner::{BoundRecord, RunOutput, TrialRecord};
use crate::error::{MmlError, Result};

/// Distribution of one statistic over the records of one matching kind.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StatSummary {
    pub statistic: String,
    pub matching_kind: String,
    pub count: usize,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single record.
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

/// One tolerance check over the trials.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CheckOutcome {
    /// Human-readable condition, e.g. `ks_ysum <= 0.05`.
    pub condition: String,
    pub matching_kind: String,
    pub passed: usize,
    pub total: usize,
    pub required_fraction: f64,
    pub pass: bool,
}

impl CheckOutcome {
    pub fn fraction(&self) -> f64 {
        self.passed as f64 / self.total.max(1) as f64
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Summary {
    pub config: ExperimentConfig,
    pub records: usize,
    pub interrupted: bool,
    pub stats: Vec<StatSummary>,
    pub checks: Vec<CheckOutcome>,
    pub bounds: Vec<BoundRecord>,
    pub all_pass: bool,
}

fn kinds_in_order(records: &[TrialRecord]) -> Vec<String> {
    let mut kinds: Vec<String> = Vec::new();
    for r in records {
        if !kinds.contains(&r.matching_kind) {
            kinds.push(r.matching_kind.clone());
        }
    }
    kinds
}

/// Mean, standard deviation, min and max of every statistic per matching
/// kind. Statistics absent from all records of a kind are omitted.
pub fn summarize(records: &[TrialRecord]) -> Result<Vec<StatSummary>> {
    if records.is_empty() {
        return Err(MmlError::EmptySample);
    }
    let mut out = Vec::new();
    let columns = records[0].numeric_fields().map(|(name, _)| name);
    for kind in kinds_in_order(records) {
        for (col, name) in columns.iter().enumerate() {
            let values: Vec<f64> = records
                .iter()
                .filter(|r| r.matching_kind == kind)
                .filter_map(|r| r.numeric_fields()[col].1)
                .collect();
            if values.is_empty() {
                continue;
            }
            let count = values.len();
            let mean = values.iter().sum::<f64>() / count as f64;
            let std = if count > 1 {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64).sqrt()
            } else {
                0.0
            };
            out.push(StatSummary {
                statistic: name.to_string(),
                matching_kind: kind.clone(),
                count,
                mean,
                std,
                min: values.iter().copied().fold(f64::INFINITY, f64::min),
                max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            });
        }
    }
    Ok(out)
}

type Predicate = Box<dyn Fn(&TrialRecord) -> Option<bool>>;

/// Per-record checks implied by the configured tolerances.
fn record_predicates(cfg: &ExperimentConfig) -> Vec<(String, Predicate, f64)> {
    let pass = cfg.pass_fraction();
    let mut out: Vec<(String, Predicate, f64)> = Vec::new();
    let mut upper = |name: &'static str, get: fn(&TrialRecord) -> Option<f64>| {
        if let Some(tol) = cfg.tolerance(name) {
            out.push((
                format!("{name} <= {tol}"),
                Box::new(move |r| get(r).map(|v| v <= tol)),
                pass,
            ));
        }
    };
    upper("ks_ysum", |r| r.ks_ysum);
    upper("ks_fit", |r| r.ks_fit);
    upper("ks_rank", |r| r.ks_rank);
    upper("dispersion", |r| r.dispersion);
    upper("alpha", |r| r.alpha_cert);
    if let Some(tol) = cfg.tolerance("hyperbola") {
        out.push((
            format!("|hyperbola - 1| <= {tol}"),
            Box::new(move |r| r.hyperbola.map(|h| (h - 1.0).abs() <= tol)),
            pass,
        ));
    }
    if let Some(tol) = cfg.tolerance("rank_ratio") {
        out.push((
            format!("rank_ratio_frac <= {tol}"),
            Box::new(move |r| r.rank_ratio_frac.map(|v| v <= tol)),
            pass,
        ));
    }
    if let Some(tol) = cfg.tolerance("lnp_lnq") {
        out.push((
            format!("lnp_lnq_gap <= {tol}"),
            Box::new(move |r| r.lnp_lnq_gap.map(|v| v <= tol)),
            pass,
        ));
    }
    if let Some(c) = cfg.tolerance("proposals") {
        let n = cfg.n as f64;
        let floor = c * n * n.ln();
        out.push((
            format!("proposal_count >= {c} n ln n"),
            Box::new(move |r| r.proposal_count.map(|p| p as f64 >= floor)),
            1.0,
        ));
    }
    if cfg.regions.is_some() {
        out.push((
            "regions_ok".into(),
            Box::new(|r| r.regions_ok.map(|v| v == 1)),
            pass,
        ));
    }
    out.push((
        "da_agree".into(),
        Box::new(|r| r.da_agree.map(|v| v == 1)),
        1.0,
    ));
    out
}

/// Evaluates every configured tolerance against the records.
pub fn evaluate_checks(cfg: &ExperimentConfig, records: &[TrialRecord], bounds: &[BoundRecord]) -> Vec<CheckOutcome> {
    let mut checks = Vec::new();
    let kinds = kinds_in_order(records);
    for (condition, pred, required) in record_predicates(cfg) {
        for kind in &kinds {
            let results: Vec<bool> = records
                .iter()
                .filter(|r| &r.matching_kind == kind)
                .filter_map(&pred)
                .collect();
            if results.is_empty() {
                continue;
            }
            let passed = results.iter().filter(|&&b| b).count();
            let total = results.len();
            checks.push(CheckOutcome {
                condition: condition.clone(),
                matching_kind: kind.clone(),
                passed,
                total,
                required_fraction: required,
                pass: passed as f64 >= required * total as f64 - 1e-9,
            });
        }
    }
    if cfg.experiment == ExperimentKind::StableCount {
        if let (Some(expected), Some(margin)) = (cfg.tolerance("expected_count"), cfg.tolerance("count_margin")) {
            let counts: Vec<f64> = records.iter().filter_map(|r| r.stable_count).map(|c| c as f64).collect();
            if !counts.is_empty() {
                let mean = counts.iter().sum::<f64>() / counts.len() as f64;
                checks.push(CheckOutcome {
                    condition: format!("|mean stable_count - {expected}| <= {margin} (mean {mean})"),
                    matching_kind: "ENUM".into(),
                    passed: ((mean - expected).abs() <= margin) as usize,
                    total: 1,
                    required_fraction: 1.0,
                    pass: (mean - expected).abs() <= margin,
                });
            }
        }
    }
    for b in bounds {
        checks.push(CheckOutcome {
            condition: format!(
                "{} n={} parameter={}: frequency {} <= bound {:e}",
                b.bound,
                b.n,
                b.parameter,
                b.frequency,
                b.bound_value
            ),
            matching_kind: String::new(),
            passed: b.holds as usize,
            total: 1,
            required_fraction: 1.0,
            pass: b.holds == 1,
        });
    }
    checks
}

pub fn build_summary(output: &RunOutput) -> Result<Summary> {
    let stats = if output.records.is_empty() {
        Vec::new()
    } else {
        summarize(&output.records)?
    };
    let checks = evaluate_checks(&output.config, &output.records, &output.bounds);
    let all_pass = !output.interrupted && checks.iter().all(|c| c.pass);
    Ok(Summary {
        config: output.config.clone(),
        records: output.records.len(),
        interrupted: output.interrupted,
        stats,
        checks,
        bounds: output.bounds.clone(),
        all_pass,
    })
}

/// Fixed-width table of the statistics.
pub fn render_stats(stats: &[StatSummary]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<16} {:<13} {:>6} {:>13} {:>13} {:>13} {:>13}",
        "statistic", "kind", "count", "mean", "std", "min", "max"
    );
    for st in stats {
        let _ = writeln!(
            s,
            "{:<16} {:<13} {:>6} {:>13.6e} {:>13.6e} {:>13.6e} {:>13.6e}",
            st.statistic, st.matching_kind, st.count, st.mean, st.std, st.min, st.max
        );
    }
    s
}

pub fn render_summary(summary: &Summary) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "experiment {} n={} trials={} master_seed={} records={}{}",
        summary.config.experiment,
        summary.config.n,
        summary.config.trials,
        summary.config.master_seed,
        summary.records,
        if summary.interrupted { " (interrupted)" } else { "" }
    );
    if !summary.stats.is_empty() {
        s.push('\n');
        s.push_str(&render_stats(&summary.stats));
    }
    if !summary.checks.is_empty() {
        s.push('\n');
        for c in &summary.checks {
            let kind = if c.matching_kind.is_empty() {
                String::new()
            } else {
                format!(" [{}]", c.matching_kind)
            };
            let _ = writeln!(
                s,
                "{} {}{}: {}/{} (need {:.0}%)",
                if c.pass { "PASS" } else { "FAIL" },
                c.condition,
                kind,
                c.passed,
                c.total,
                100.0 * c.required_fraction
            );
        }
    }
    let _ = writeln!(s, "\noverall: {}", if summary.all_pass { "PASS" } else { "FAIL" });
    s
}

fn csv_err(e: csv::Error) -> MmlError {
    let line = e.position().map_or(0, |p| p.line() as usize);
    MmlError::Parse {
        line,
        message: e.to_string(),
    }
}

pub fn records_to_csv(records: &[TrialRecord]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    if records.is_empty() {
        // serde only emits the header with the first record
        w.write_record(TRIAL_COLUMNS).map_err(csv_err)?;
    }
    for r in records {
        w.serialize(r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| MmlError::Io(e.into_error()))
}

/// Column order of `trials.csv`.
pub const TRIAL_COLUMNS: [&str; 22] = [
    "trial_id",
    "matching_kind",
    "lambda_fit",
    "lambda_ysum",
    "ks_fit",
    "ks_ysum",
    "hyperbola",
    "dispersion",
    "rank_ratio_frac",
    "proposal_count",
    "stable_count",
    "alpha_cert",
    "lambda_yfull",
    "ks_yfull",
    "lambda_rank",
    "ks_rank",
    "mean_rank_men",
    "mean_rank_women",
    "lnp_lnq_gap",
    "hyperbola_full",
    "regions_ok",
    "da_agree",
];

pub fn read_records(path: &Path) -> Result<Vec<TrialRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    r.deserialize().map(|row| row.map_err(csv_err)).collect()
}

/// Writes `trials.csv`, `summary.json` and `summary.txt` (and `bounds.csv`
/// for the bounds experiment) into `dir`.
pub fn write_outputs(dir: &Path, output: &RunOutput, summary: &Summary) -> Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join("trials.csv"), records_to_csv(&output.records)?)?;
    if !output.bounds.is_empty() {
        let mut w = csv::Writer::from_writer(Vec::new());
        for b in &output.bounds {
            w.serialize(b).map_err(csv_err)?;
        }
        let bytes = w.into_inner().map_err(|e| MmlError::Io(e.into_error()))?;
        fs::write(dir.join("bounds.csv"), bytes)?;
    }
    let json = serde_json::to_string_pretty(summary)
        .map_err(|e| MmlError::InvalidArgument(format!("cannot serialize summary: {e}")))?;
    fs::write(dir.join("summary.json"), json + "\n")?;
    fs::write(dir.join("summary.txt"), render_summary(summary))?;
    Ok(())
}
