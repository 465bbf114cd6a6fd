//! Trial execution.
//!
//! Trial `t` draws everything from streams keyed by `(master_seed, t)`, so
//! a trial's record does not depend on which worker runs it or when.

use std::sync::atomic::{AtomicBool, Ordering};

use ndarray::{s, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, ExperimentKind, MarketSpec};
use crate::error::{MmlError, Result};
use crate::market::{
    backfill_imbalanced, balance, public_scores_market, random_cbounded_rect, uniform_market,
    BalancedMarket, CanonicalMarket,
};
use crate::matching::{
    deferred_acceptance, enumerate_stable, greedy_alpha_certificate, outcome_of, truncate_delta,
    Matching, Side,
};
use crate::oracles::{chernoff_lower_tail, chernoff_monte_carlo, dkw_monte_carlo, ln_p_mu, ln_q_xy};
use crate::rng::StreamKey;
use crate::sampling::{prefs_from_latent, sample_latent, LatentValues};
use crate::stats::{
    best_fit_exponential, eig_dispersion, hyperbola_product, ks_distance_to_exp, rank_value_ratio_report,
    region_check, rescaled_ranks,
};

/// One row of `trials.csv`. Statistics that do not apply to an experiment
/// are left empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    /// `MOSM`, `WOSM`, a swapped variant of either, or `ENUM`.
    pub matching_kind: String,
    pub lambda_fit: Option<f64>,
    /// Women's truncated value sum, used as the rate for `ks_ysum`.
    pub lambda_ysum: Option<f64>,
    pub ks_fit: Option<f64>,
    pub ks_ysum: Option<f64>,
    pub hyperbola: Option<f64>,
    pub dispersion: Option<f64>,
    pub rank_ratio_frac: Option<f64>,
    pub proposal_count: Option<u64>,
    pub stable_count: Option<u64>,
    pub alpha_cert: Option<f64>,
    /// Untruncated women's value sum and the KS distance at that rate.
    pub lambda_yfull: Option<f64>,
    pub ks_yfull: Option<f64>,
    /// Best exponential fit of the fitness-rescaled men's ranks.
    pub lambda_rank: Option<f64>,
    pub ks_rank: Option<f64>,
    pub mean_rank_men: Option<f64>,
    pub mean_rank_women: Option<f64>,
    /// `|ln p_mu - ln q|` on the truncated values, in units of `n / sqrt(ln n)`.
    pub lnp_lnq_gap: Option<f64>,
    /// `n^-1 |X|_1 |Y|_1` without truncation.
    pub hyperbola_full: Option<f64>,
    pub regions_ok: Option<u8>,
    /// 1 when the matching agrees with its reference computation.
    pub da_agree: Option<u8>,
}

impl TrialRecord {
    fn new(trial_id: u64, kind: &str) -> Self {
        TrialRecord {
            trial_id,
            matching_kind: kind.to_string(),
            lambda_fit: None,
            lambda_ysum: None,
            ks_fit: None,
            ks_ysum: None,
            hyperbola: None,
            dispersion: None,
            rank_ratio_frac: None,
            proposal_count: None,
            stable_count: None,
            alpha_cert: None,
            lambda_yfull: None,
            ks_yfull: None,
            lambda_rank: None,
            ks_rank: None,
            mean_rank_men: None,
            mean_rank_women: None,
            lnp_lnq_gap: None,
            hyperbola_full: None,
            regions_ok: None,
            da_agree: None,
        }
    }

    /// Every statistic as `(column, value)`, in column order.
    pub fn numeric_fields(&self) -> [(&'static str, Option<f64>); 20] {
        let u = |v: Option<u64>| v.map(|v| v as f64);
        let b = |v: Option<u8>| v.map(f64::from);
        [
            ("lambda_fit", self.lambda_fit),
            ("lambda_ysum", self.lambda_ysum),
            ("ks_fit", self.ks_fit),
            ("ks_ysum", self.ks_ysum),
            ("hyperbola", self.hyperbola),
            ("dispersion", self.dispersion),
            ("rank_ratio_frac", self.rank_ratio_frac),
            ("proposal_count", u(self.proposal_count)),
            ("stable_count", u(self.stable_count)),
            ("alpha_cert", self.alpha_cert),
            ("lambda_yfull", self.lambda_yfull),
            ("ks_yfull", self.ks_yfull),
            ("lambda_rank", self.lambda_rank),
            ("ks_rank", self.ks_rank),
            ("mean_rank_men", self.mean_rank_men),
            ("mean_rank_women", self.mean_rank_women),
            ("lnp_lnq_gap", self.lnp_lnq_gap),
            ("hyperbola_full", self.hyperbola_full),
            ("regions_ok", b(self.regions_ok)),
            ("da_agree", b(self.da_agree)),
        ]
    }
}

/// One Monte Carlo bound validation from the `bounds` experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundRecord {
    pub bound: String,
    pub n: usize,
    /// `t` for the Chernoff bound, `epsilon` for DKW.
    pub parameter: f64,
    pub trials: u64,
    pub hits: u64,
    pub frequency: f64,
    pub bound_value: f64,
    pub holds: u8,
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub config: ExperimentConfig,
    pub records: Vec<TrialRecord>,
    pub bounds: Vec<BoundRecord>,
    /// Trials were skipped because the run was cancelled.
    pub interrupted: bool,
}

pub fn trial_key(master_seed: u64, trial: u64) -> StreamKey {
    StreamKey::new(master_seed).label("trial").index(trial)
}

fn build_market(spec: MarketSpec, n_men: usize, n_women: usize, key: StreamKey) -> Result<CanonicalMarket> {
    match spec {
        MarketSpec::Uniform => uniform_market(n_men, n_women),
        MarketSpec::CBounded { c } => random_cbounded_rect(n_men, n_women, c, key.raw()),
        MarketSpec::PublicScores { c } => {
            let log_c = c.ln();
            let draw = |label: &str, len: usize| -> Vec<f64> {
                let k = key.label(label);
                (0..len)
                    .map(|i| (log_c * (2.0 * k.index(i as u64).uniform(0) - 1.0)).exp())
                    .collect()
            };
            public_scores_market(&draw("women", n_women), &draw("men", n_men))
        }
    }
}

fn mean_rank(ranks: &[usize]) -> f64 {
    let matched: Vec<f64> = ranks.iter().filter(|&&r| r > 0).map(|&r| r as f64).collect();
    matched.iter().sum::<f64>() / matched.len().max(1) as f64
}

fn kind_name(side: Side) -> &'static str {
    match side {
        Side::Men => "MOSM",
        Side::Women => "WOSM",
    }
}

/// All statistics of a perfect matching of a balanced market.
fn analyze_matching(
    cfg: &ExperimentConfig,
    bal: &BalancedMarket,
    values: &LatentValues,
    mu: &Matching,
    record: &mut TrialRecord,
) -> Result<()> {
    let n = bal.n();
    let outcome = outcome_of(mu, values);
    let (x_delta, y_delta, partial) = if cfg.delta > 0.0 {
        let t = truncate_delta(mu, &outcome, cfg.delta)?;
        (t.x_delta, t.y_delta, t.partial)
    } else {
        (outcome.value_men.clone(), outcome.value_women.clone(), mu.clone())
    };
    let phi = bal.phi().to_vec();

    let fit = best_fit_exponential(&outcome.value_men)?;
    record.lambda_fit = Some(fit.lambda);
    record.ks_fit = Some(fit.ks_distance);
    let y_sum: f64 = y_delta.iter().sum();
    record.lambda_ysum = Some(y_sum);
    record.ks_ysum = Some(ks_distance_to_exp(&outcome.value_men, y_sum)?);
    let y_full: f64 = outcome.value_women.iter().sum();
    record.lambda_yfull = Some(y_full);
    record.ks_yfull = Some(ks_distance_to_exp(&outcome.value_men, y_full)?);

    let rank_fit = best_fit_exponential(&rescaled_ranks(&outcome.rank_men, &phi)?)?;
    record.lambda_rank = Some(rank_fit.lambda);
    record.ks_rank = Some(rank_fit.ks_distance);
    record.mean_rank_men = Some(mean_rank(&outcome.rank_men));
    record.mean_rank_women = Some(mean_rank(&outcome.rank_women));

    record.hyperbola = Some(hyperbola_product(&x_delta, &y_delta, n));
    record.hyperbola_full = Some(hyperbola_product(&outcome.value_men, &outcome.value_women, n));
    record.dispersion = Some(eig_dispersion(bal.m(), &outcome.value_women, cfg.zeta)?.violating_fraction);
    record.rank_ratio_frac = Some(rank_value_ratio_report(&outcome, &phi, cfg.theta));
    if n >= 2 {
        let gap = (ln_p_mu(&x_delta, &y_delta, bal.a(), bal.b(), &partial) - ln_q_xy(&x_delta, &y_delta, bal.m())).abs();
        record.lnp_lnq_gap = Some(gap / (n as f64 / (n as f64).ln().sqrt()));
    }
    if let Some((lo, hi, c2)) = cfg.regions {
        let flags = region_check(&x_delta, &y_delta, bal.m(), lo, hi, c2)?;
        record.regions_ok = Some(flags.all() as u8);
    }
    Ok(())
}

/// Exchanges the partners of `k` random pairs of men.
fn swap_partners(mu: &Matching, k: usize, key: StreamKey) -> Result<Matching> {
    let n = mu.n_men();
    let mut partner: Vec<usize> = mu
        .man_partners()
        .iter()
        .map(|p| p.expect("perfect matching"))
        .collect();
    let mut rng = key.rng();
    for _ in 0..k {
        let a = (rng.open01() * n as f64) as usize;
        let mut b = (rng.open01() * (n - 1) as f64) as usize;
        if b >= a {
            b += 1;
        }
        partner.swap(a, b);
    }
    Matching::perfect(&partner)
}

fn square_trial(cfg: &ExperimentConfig, t: u64) -> Result<Vec<TrialRecord>> {
    let key = trial_key(cfg.master_seed, t);
    let market = build_market(cfg.market, cfg.n, cfg.n, key.label("market"))?;
    let bal = balance(&market)?;
    let values = sample_latent(&bal, key.label("values").raw())?;
    let prefs = prefs_from_latent(&values)?;
    let mut out = Vec::with_capacity(2);
    for side in [Side::Men, Side::Women] {
        let da = deferred_acceptance(&prefs, side);
        match cfg.experiment {
            ExperimentKind::ApproxStable => {
                let swapped = swap_partners(&da.matching, cfg.k, key.label("swaps").label(kind_name(side)))?;
                let mut rec = TrialRecord::new(t, &format!("{}_SWAPPED", kind_name(side)));
                analyze_matching(cfg, &bal, &values, &swapped, &mut rec)?;
                rec.alpha_cert = Some(greedy_alpha_certificate(&swapped, &values).alpha_upper);
                out.push(rec);
            }
            _ => {
                let mut rec = TrialRecord::new(t, kind_name(side));
                analyze_matching(cfg, &bal, &values, &da.matching, &mut rec)?;
                rec.proposal_count = Some(da.proposals);
                out.push(rec);
            }
        }
    }
    Ok(out)
}

fn stable_count_trial(cfg: &ExperimentConfig, t: u64) -> Result<Vec<TrialRecord>> {
    let key = trial_key(cfg.master_seed, t);
    let market = build_market(cfg.market, cfg.n, cfg.n, key.label("market"))?;
    let bal = balance(&market)?;
    let values = sample_latent(&bal, key.label("values").raw())?;
    let prefs = prefs_from_latent(&values)?;
    let all = enumerate_stable(&prefs)?;
    let found = [Side::Men, Side::Women]
        .iter()
        .all(|&side| all.contains(&deferred_acceptance(&prefs, side).matching));
    let mut rec = TrialRecord::new(t, "ENUM");
    rec.stable_count = Some(all.len() as u64);
    rec.da_agree = Some(found as u8);
    Ok(vec![rec])
}

/// `n - k` real men and `n` women. The rectangular market's values come
/// from the balanced backfilled market restricted to the real men. For the
/// agreement check the backfilled men are appended with values that make
/// every woman rank them below every real man.
fn imbalance_trial(cfg: &ExperimentConfig, t: u64) -> Result<Vec<TrialRecord>> {
    let (n, k) = (cfg.n, cfg.k);
    let real = n - k;
    let key = trial_key(cfg.master_seed, t);
    let market = build_market(cfg.market, real, n, key.label("market"))?;
    let bal = balance(&backfill_imbalanced(&market, k)?)?;
    let full = sample_latent(&bal, key.label("values").raw())?;

    let rect = LatentValues::new(
        full.x().slice(s![..real, ..]).to_owned(),
        full.y().slice(s![.., ..real]).to_owned(),
        full.seed(),
    )?;
    let mut y_embed: Array2<f64> = full.y().clone();
    for (mut row, real_row) in y_embed.rows_mut().into_iter().zip(rect.y().rows()) {
        let worst = real_row.iter().copied().fold(0.0_f64, f64::max);
        row.slice_mut(s![real..]).mapv_inplace(|v| worst + v);
    }
    let embedded = LatentValues::new(full.x().clone(), y_embed, full.seed())?;

    let rect_prefs = prefs_from_latent(&rect)?;
    let embedded_prefs = prefs_from_latent(&embedded)?;
    let real_men: Vec<usize> = (0..real).collect();
    let mut out = Vec::with_capacity(2);
    for side in [Side::Men, Side::Women] {
        let da = deferred_acceptance(&rect_prefs, side);
        let reference = deferred_acceptance(&embedded_prefs, side)
            .matching
            .restrict_to_men(&real_men);
        let agree = reference.man_partners()[..real] == *da.matching.man_partners();

        let outcome = outcome_of(&da.matching, &rect);
        let mut rec = TrialRecord::new(t, kind_name(side));
        let fit = best_fit_exponential(&outcome.value_men)?;
        rec.lambda_fit = Some(fit.lambda);
        rec.ks_fit = Some(fit.ks_distance);
        let y_full: f64 = outcome.value_women.iter().sum();
        rec.lambda_yfull = Some(y_full);
        rec.ks_yfull = Some(ks_distance_to_exp(&outcome.value_men, y_full)?);
        rec.mean_rank_men = Some(mean_rank(&outcome.rank_men));
        rec.mean_rank_women = Some(mean_rank(&outcome.rank_women));
        rec.proposal_count = Some(da.proposals);
        rec.da_agree = Some(agree as u8);
        out.push(rec);
    }
    Ok(out)
}

fn run_trial(cfg: &ExperimentConfig, t: u64) -> Result<Vec<TrialRecord>> {
    match cfg.experiment {
        ExperimentKind::StableCount => stable_count_trial(cfg, t),
        ExperimentKind::Imbalance => imbalance_trial(cfg, t),
        ExperimentKind::Bounds => Ok(Vec::new()),
        _ => square_trial(cfg, t),
    }
}

/// Weights in `[1/2, 2]` (before normalization to sum `n`) for the
/// Chernoff check.
fn chernoff_weights(n: usize, key: StreamKey) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|i| (std::f64::consts::LN_2 * (2.0 * key.index(i as u64).uniform(0) - 1.0)).exp())
        .collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v * n as f64 / s).collect()
}

fn run_bounds(cfg: &ExperimentConfig) -> Result<Vec<BoundRecord>> {
    let key = StreamKey::new(cfg.master_seed).label("bounds");
    let mut out = Vec::new();
    let u = chernoff_weights(cfg.n, key.label("weights"));
    for (idx, &t) in cfg.chernoff_t.iter().enumerate() {
        let bound_value = chernoff_lower_tail(&u, t)?;
        let est = chernoff_monte_carlo(&u, t, cfg.trials, key.label("chernoff").index(idx as u64).raw())?;
        out.push(BoundRecord {
            bound: "chernoff".into(),
            n: cfg.n,
            parameter: t,
            trials: est.trials,
            hits: est.hits,
            frequency: est.frequency(),
            bound_value,
            holds: (est.frequency() <= bound_value) as u8,
        });
    }
    for (idx, &eps) in cfg.dkw_eps.iter().enumerate() {
        let check = dkw_monte_carlo(
            cfg.dkw_n,
            cfg.dkw_delta,
            eps,
            cfg.dkw_experiments,
            key.label("dkw").index(idx as u64).raw(),
        )?;
        out.push(BoundRecord {
            bound: "dkw".into(),
            n: cfg.dkw_n,
            parameter: eps,
            trials: check.estimate.trials,
            hits: check.estimate.hits,
            frequency: check.estimate.frequency(),
            bound_value: check.bound,
            holds: check.holds() as u8,
        });
    }
    Ok(out)
}

/// Runs every trial of `cfg` on a pool of `cfg.workers` threads. Setting
/// `cancel` makes the remaining trials return nothing; the output then
/// holds the completed trials and `interrupted` is set.
pub fn run_experiment(cfg: &ExperimentConfig, cancel: &AtomicBool) -> Result<RunOutput> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| MmlError::InvalidArgument(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        if cfg.experiment == ExperimentKind::Bounds {
            return Ok(RunOutput {
                config: cfg.clone(),
                records: Vec::new(),
                bounds: run_bounds(cfg)?,
                interrupted: false,
            });
        }
        let per_trial: Vec<Option<Result<Vec<TrialRecord>>>> = (0..cfg.trials)
            .into_par_iter()
            .map(|t| (!cancel.load(Ordering::Relaxed)).then(|| run_trial(cfg, t)))
            .collect();
        let interrupted = per_trial.iter().any(Option::is_none);
        let mut records = Vec::new();
        for r in per_trial.into_iter().flatten() {
            records.extend(r?);
        }
        Ok(RunOutput {
            config: cfg.clone(),
            records,
            bounds: Vec::new(),
            interrupted,
        })
    })
}
