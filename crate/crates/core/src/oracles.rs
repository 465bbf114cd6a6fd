//! Closed-form stability likelihoods and concentration bounds, each with a
//! Monte Carlo validator.
//!
//! Products of many factors close to 1 are accumulated as sums of
//! `ln_1p`/`exp_m1` terms; the `ln_*` variants never underflow.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{MmlError, Result};
use crate::market::{balance, CanonicalMarket};
use crate::matching::{enumerate_stable, is_stable, Matching, MAX_ENUMERATE_N};
use crate::rng::StreamKey;
use crate::sampling::{prefs_from_latent, sample_latent, LatentValues};
use crate::stats::{dkw_bound, ks_distance_to_exp};

/// The three stability likelihoods of one `(x, y, mu)` triple.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityLikelihood {
    pub p_mu: f64,
    pub q_xy: f64,
    pub naive_upper: f64,
}

fn check_shapes(x: &[f64], y: &[f64], a: &Array2<f64>, b: &Array2<f64>, mu: &Matching) {
    assert_eq!(a.dim(), (x.len(), y.len()), "A must be n_men x n_women");
    assert_eq!(b.dim(), (y.len(), x.len()), "B must be n_women x n_men");
    assert_eq!((mu.n_men(), mu.n_women()), (x.len(), y.len()), "matching shape");
}

/// `ln(1 - (1 - e^-s)(1 - e^-t))` for `s, t >= 0`.
#[inline]
fn ln_pair_factor(s: f64, t: f64) -> f64 {
    let u = -(-s).exp_m1();
    let v = -(-t).exp_m1();
    (-u * v).ln_1p()
}

/// `ln p_mu(x, y)`: log-probability that `mu` is stable given the matched
/// values `x` (men) and `y` (women), with rates `A` and `B`.
///
/// # Panics
/// If the shapes of `x`, `y`, `a`, `b` and `mu` disagree.
pub fn ln_p_mu(x: &[f64], y: &[f64], a: &Array2<f64>, b: &Array2<f64>, mu: &Matching) -> f64 {
    check_shapes(x, y, a, b, mu);
    let mut acc = 0.0;
    for i in 0..x.len() {
        if x[i] == 0.0 {
            continue;
        }
        for j in 0..y.len() {
            if mu.partner_of_man(i) != Some(j) {
                acc += ln_pair_factor(a[[i, j]] * x[i], b[[j, i]] * y[j]);
            }
        }
    }
    acc
}

pub fn p_mu(x: &[f64], y: &[f64], a: &Array2<f64>, b: &Array2<f64>, mu: &Matching) -> f64 {
    ln_p_mu(x, y, a, b, mu).exp()
}

/// `-n xᵀ M y`.
///
/// # Panics
/// If `M` is not `x.len() x y.len()`.
pub fn ln_q_xy(x: &[f64], y: &[f64], m: &Array2<f64>) -> f64 {
    assert_eq!(m.dim(), (x.len(), y.len()), "M must be len(x) x len(y)");
    let quad: f64 = m
        .rows()
        .into_iter()
        .zip(x)
        .map(|(row, &xi)| xi * row.iter().zip(y).map(|(mij, yj)| mij * yj).sum::<f64>())
        .sum();
    -(m.nrows() as f64) * quad
}

pub fn q_xy(x: &[f64], y: &[f64], m: &Array2<f64>) -> f64 {
    ln_q_xy(x, y, m).exp()
}

/// Log of the bound on `p_mu` that uses only the matched rates and a
/// contiguity constant `c`: every off-match rate is replaced by its
/// worst case `a_{i,mu(i)} / c^2`.
pub fn ln_naive_p_upper(
    x: &[f64],
    y: &[f64],
    mu: &Matching,
    a: &Array2<f64>,
    b: &Array2<f64>,
    c: f64,
) -> f64 {
    check_shapes(x, y, a, b, mu);
    let c2 = c * c;
    let x_hat: Vec<f64> = (0..x.len())
        .map(|i| mu.partner_of_man(i).map_or(0.0, |j| x[i] * a[[i, j]]))
        .collect();
    let y_hat: Vec<f64> = (0..y.len())
        .map(|j| mu.partner_of_woman(j).map_or(0.0, |i| y[j] * b[[j, i]]))
        .collect();
    let mut acc = 0.0;
    for (i, &xh) in x_hat.iter().enumerate() {
        if xh == 0.0 {
            continue;
        }
        for (j, &yh) in y_hat.iter().enumerate() {
            if mu.partner_of_man(i) != Some(j) {
                acc += ln_pair_factor(xh / c2, yh / c2);
            }
        }
    }
    acc
}

pub fn naive_p_upper(
    x: &[f64],
    y: &[f64],
    mu: &Matching,
    a: &Array2<f64>,
    b: &Array2<f64>,
    c: f64,
) -> f64 {
    ln_naive_p_upper(x, y, mu, a, b, c).exp()
}

/// All three likelihoods at once, using the balanced market's own `C`.
pub fn stability_likelihood(
    x: &[f64],
    y: &[f64],
    bal: &crate::market::BalancedMarket,
    mu: &Matching,
) -> StabilityLikelihood {
    StabilityLikelihood {
        p_mu: p_mu(x, y, bal.a(), bal.b(), mu),
        q_xy: q_xy(x, y, bal.m()),
        naive_upper: naive_p_upper(x, y, mu, bal.a(), bal.b(), bal.c_bound()),
    }
}

const NORMALIZATION_TOL: f64 = 1e-9;

/// Log of the lower-tail bound `P(u·Z <= t n) <= (t e^(1-t))^n / prod(u)`
/// for `Z ~ Exp(1)^n`, clamped at 0 (probability 1).
pub fn ln_chernoff_lower_tail(u: &[f64], t: f64) -> Result<f64> {
    let n = u.len();
    if n == 0 {
        return Err(MmlError::EmptySample);
    }
    if let Some(&bad) = u.iter().find(|&&v| !(v > 0.0 && v.is_finite())) {
        return Err(MmlError::InvalidArgument(format!("weights must be positive, got {bad}")));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(MmlError::InvalidArgument(format!("t must be non-negative, got {t}")));
    }
    let sum: f64 = u.iter().sum();
    if (sum - n as f64).abs() > NORMALIZATION_TOL {
        return Err(MmlError::NotNormalized {
            sum,
            expected: n as f64,
        });
    }
    if t == 0.0 {
        return Ok(f64::NEG_INFINITY);
    }
    let nf = n as f64;
    let log_bound = nf * (t.ln() + 1.0 - t) - u.iter().map(|v| v.ln()).sum::<f64>();
    Ok(log_bound.min(0.0))
}

pub fn chernoff_lower_tail(u: &[f64], t: f64) -> Result<f64> {
    Ok(ln_chernoff_lower_tail(u, t)?.exp())
}

/// A Monte Carlo frequency.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub hits: u64,
    pub trials: u64,
}

impl McEstimate {
    pub fn frequency(&self) -> f64 {
        self.hits as f64 / self.trials as f64
    }

    /// Binomial standard error of [`frequency`](Self::frequency).
    pub fn stderr(&self) -> f64 {
        let p = self.frequency();
        (p * (1.0 - p) / self.trials as f64).sqrt()
    }
}

fn count_hits<F>(trials: u64, hit: F) -> Result<McEstimate>
where
    F: Fn(u64) -> Result<bool> + Sync,
{
    if trials == 0 {
        return Err(MmlError::InvalidArgument("need at least one trial".into()));
    }
    let hits = (0..trials)
        .into_par_iter()
        .map(|t| hit(t).map(u64::from))
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    Ok(McEstimate { hits, trials })
}

/// Mean and standard error of the number of stable matchings over
/// `n_trials` latent-value draws. Requires a square market with
/// `n <= 10`.
pub fn expected_stable_count_mc(market: &CanonicalMarket, n_trials: u64, seed: u64) -> Result<(f64, f64)> {
    let n = market.n_men().max(market.n_women());
    if n > MAX_ENUMERATE_N {
        return Err(MmlError::TooLarge {
            n,
            max: MAX_ENUMERATE_N,
        });
    }
    if n_trials == 0 {
        return Err(MmlError::InvalidArgument("need at least one trial".into()));
    }
    let bal = balance(market)?;
    let key = StreamKey::new(seed).label("stable_count");
    let (s, s2) = (0..n_trials)
        .into_par_iter()
        .map(|t| -> Result<(u64, u64)> {
            let values = sample_latent(&bal, key.index(t).raw())?;
            let k = enumerate_stable(&prefs_from_latent(&values)?)?.len() as u64;
            Ok((k, k * k))
        })
        .try_reduce(|| (0, 0), |a, b| Ok((a.0 + b.0, a.1 + b.1)))?;
    let nt = n_trials as f64;
    let mean = s as f64 / nt;
    if n_trials == 1 {
        return Ok((mean, 0.0));
    }
    // integer sums keep the result independent of reduction order
    let var = ((s2 as f64 - (s as f64) * (s as f64) / nt) / (nt - 1.0)).max(0.0);
    Ok((mean, (var / nt).sqrt()))
}

/// Frequency with which `mu` is stable when its matched values are pinned
/// to `x`, `y` and every other value is redrawn from its exponential law.
pub fn p_mu_monte_carlo(
    x: &[f64],
    y: &[f64],
    a: &Array2<f64>,
    b: &Array2<f64>,
    mu: &Matching,
    resamples: u64,
    seed: u64,
) -> Result<McEstimate> {
    check_shapes(x, y, a, b, mu);
    if !mu.is_full() {
        return Err(MmlError::InvalidArgument("the matching must be full".into()));
    }
    let key = StreamKey::new(seed).label("p_mu");
    count_hits(resamples, |r| {
        let kr = key.index(r);
        let (kx, ky) = (kr.label("X"), kr.label("Y"));
        let xm = Array2::from_shape_fn(a.dim(), |(i, j)| {
            if mu.partner_of_man(i) == Some(j) {
                x[i]
            } else {
                -kx.index(i as u64).index(j as u64).uniform(0).ln() / a[[i, j]]
            }
        });
        let ym = Array2::from_shape_fn(b.dim(), |(j, i)| {
            if mu.partner_of_woman(j) == Some(i) {
                y[j]
            } else {
                -ky.index(j as u64).index(i as u64).uniform(0).ln() / b[[j, i]]
            }
        });
        Ok(is_stable(mu, &LatentValues::new(xm, ym, r)?))
    })
}

/// Frequency of `u·Z <= t n` over `trials` draws of `Z ~ Exp(1)^n`.
pub fn chernoff_monte_carlo(u: &[f64], t: f64, trials: u64, seed: u64) -> Result<McEstimate> {
    ln_chernoff_lower_tail(u, t)?;
    let threshold = t * u.len() as f64;
    let key = StreamKey::new(seed).label("chernoff");
    count_hits(trials, |k| {
        let mut rng = key.index(k).rng();
        let s: f64 = u.iter().map(|&w| w * rng.exp(1.0)).sum();
        Ok(s <= threshold)
    })
}

/// Sup distance between the CDFs of `Exp(r)` and `Exp(1)`.
pub fn exp_rate_ks(r: f64) -> f64 {
    if r == 1.0 {
        return 0.0;
    }
    let x_star = r.ln() / (r - 1.0);
    ((-x_star).exp() - (-r * x_star).exp()).abs()
}

/// Rates `(lo, hi)` around 1 at which [`exp_rate_ks`] equals `delta`.
pub fn rate_band_for_ks(delta: f64) -> Result<(f64, f64)> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(MmlError::DeltaOutOfRange(delta));
    }
    // exp_rate_ks is increasing in |ln r|
    let solve = |sign: f64| {
        let (mut lo, mut hi) = (0.0_f64, 40.0_f64);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if exp_rate_ks((sign * mid).exp()) < delta {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        (sign * lo).exp()
    };
    Ok((solve(-1.0), solve(1.0)))
}

/// Outcome of [`dkw_monte_carlo`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DkwCheck {
    pub bound: f64,
    pub estimate: McEstimate,
    pub rate_lo: f64,
    pub rate_hi: f64,
}

impl DkwCheck {
    pub fn holds(&self) -> bool {
        self.estimate.frequency() <= self.bound
    }
}

/// Each experiment draws `n` independent exponentials whose rates are
/// spread over the band where each law is within `delta` of `Exp(1)`, and
/// counts the experiments whose ECDF is further than `2 delta + epsilon`
/// from `Exp(1)`.
pub fn dkw_monte_carlo(n: usize, delta: f64, epsilon: f64, experiments: u64, seed: u64) -> Result<DkwCheck> {
    if n == 0 {
        return Err(MmlError::EmptySample);
    }
    let (rate_lo, rate_hi) = rate_band_for_ks(delta)?;
    let key = StreamKey::new(seed).label("dkw");
    let threshold = 2.0 * delta + epsilon;
    let estimate = count_hits(experiments, |e| {
        let mut rng = key.index(e).rng();
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let rate = rate_lo + (rate_hi - rate_lo) * rng.open01();
                rng.exp(rate)
            })
            .collect();
        Ok(ks_distance_to_exp(&samples, 1.0)? > threshold)
    })?;
    Ok(DkwCheck {
        bound: dkw_bound(n, delta, epsilon),
        estimate,
        rate_lo,
        rate_hi,
    })
}
