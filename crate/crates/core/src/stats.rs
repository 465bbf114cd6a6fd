//! Empirical distributions and the diagnostics computed on stable outcomes.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{MmlError, Result};
use crate::matching::MatchingOutcome;

/// Right-continuous empirical CDF, `F(t) = #{x <= t} / n`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(MmlError::EmptySample);
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(MmlError::InvalidArgument("sample contains NaN".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_unstable_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted_samples(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= t) as f64 / self.len() as f64
    }

    /// `sup_t |F(t) - cdf(t)|` for a continuous `cdf`, evaluated exactly on
    /// both sides of every jump.
    pub fn sup_distance<F: Fn(f64) -> f64>(&self, cdf: F) -> f64 {
        let n = self.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .fold(0.0_f64, |acc, (k, &x)| {
                let f = cdf(x);
                acc.max((k as f64 + 1.0) / n - f).max(f - k as f64 / n)
            })
    }
}

/// CDF of Exp(rate).
#[inline]
pub fn exp_cdf(rate: f64, x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-rate * x).exp_m1()
    }
}

fn check_rate(rate: f64) -> Result<()> {
    if rate > 0.0 && rate.is_finite() {
        Ok(())
    } else {
        Err(MmlError::NonPositiveRate(rate))
    }
}

/// Kolmogorov-Smirnov distance between the sample's ECDF and Exp(`lambda`).
pub fn ks_distance_to_exp(samples: &[f64], lambda: f64) -> Result<f64> {
    check_rate(lambda)?;
    Ok(EmpiricalCdf::new(samples)?.sup_distance(|x| exp_cdf(lambda, x)))
}

/// How the rate of an [`ExponentialFit`] was chosen.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FitMethod {
    /// Grid search then golden-section refinement of the KS distance.
    GridRefine,
    /// Rate supplied by the caller, normally the truncated women's value sum.
    ClosedFormYSum,
    /// Reciprocal of the sample mean.
    InverseMean,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub lambda: f64,
    pub ks_distance: f64,
    pub method: FitMethod,
}

const GRID_POINTS: usize = 64;
const GOLDEN_STEPS: usize = 40;

fn sample_mean(samples: &[f64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(MmlError::EmptySample);
    }
    let mean = samples.iter().sum::<f64>() / samples.len() as f64;
    if !(mean > 0.0 && mean.is_finite()) || samples.iter().any(|&x| x < 0.0) {
        return Err(MmlError::DegenerateSample);
    }
    Ok(mean)
}

/// KS distance at a fixed rate, packaged as a fit.
pub fn fit_at(samples: &[f64], lambda: f64, method: FitMethod) -> Result<ExponentialFit> {
    Ok(ExponentialFit {
        lambda,
        ks_distance: ks_distance_to_exp(samples, lambda)?,
        method,
    })
}

/// Fit at `1 / mean`.
pub fn fit_inverse_mean(samples: &[f64]) -> Result<ExponentialFit> {
    let mean = sample_mean(samples)?;
    fit_at(samples, 1.0 / mean, FitMethod::InverseMean)
}

/// Minimizes the KS distance over the rate: 64 log-spaced rates on
/// `[0.01 / mean, 100 / mean]`, then 40 golden-section steps (in log-rate)
/// on the bracket around the best grid point.
pub fn best_fit_exponential(samples: &[f64]) -> Result<ExponentialFit> {
    let mean = sample_mean(samples)?;
    let ecdf = EmpiricalCdf::new(samples)?;
    let ks = |log_rate: f64| {
        let rate = log_rate.exp();
        ecdf.sup_distance(|x| exp_cdf(rate, x))
    };
    let lo = (0.01 / mean).ln();
    let hi = (100.0 / mean).ln();
    let step = (hi - lo) / (GRID_POINTS - 1) as f64;
    let grid: Vec<(f64, f64)> = (0..GRID_POINTS)
        .map(|k| {
            let l = lo + step * k as f64;
            (l, ks(l))
        })
        .collect();
    let best_k = (0..GRID_POINTS)
        .min_by(|&a, &b| grid[a].1.total_cmp(&grid[b].1))
        .expect("non-empty grid");

    let mut a = grid[best_k.saturating_sub(1)].0;
    let mut b = grid[(best_k + 1).min(GRID_POINTS - 1)].0;
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - (b - a) * inv_phi;
    let mut d = a + (b - a) * inv_phi;
    let (mut fc, mut fd) = (ks(c), ks(d));
    for _ in 0..GOLDEN_STEPS {
        if fc <= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = ks(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = ks(d);
        }
    }
    let mut best = grid[best_k];
    for cand in [(c, fc), (d, fd)] {
        if cand.1 < best.1 {
            best = cand;
        }
    }
    Ok(ExponentialFit {
        lambda: best.0.exp(),
        ks_distance: best.1,
        method: FitMethod::GridRefine,
    })
}

/// `R_i / phi_i`.
pub fn rescaled_ranks(rank_men: &[usize], phi: &[f64]) -> Result<Vec<f64>> {
    if rank_men.len() != phi.len() {
        return Err(MmlError::ShapeMismatch(format!(
            "{} ranks but {} fitness values",
            rank_men.len(),
            phi.len()
        )));
    }
    if let Some(&p) = phi.iter().find(|&&p| !(p > 0.0)) {
        return Err(MmlError::InvalidArgument(format!("fitness must be positive, got {p}")));
    }
    Ok(rank_men.iter().zip(phi).map(|(&r, &p)| r as f64 / p).collect())
}

/// `n^-1 * |x|_1 * |y|_1`.
pub fn hyperbola_product(x_delta: &[f64], y_delta: &[f64], n: usize) -> f64 {
    let sx: f64 = x_delta.iter().map(|v| v.abs()).sum();
    let sy: f64 = y_delta.iter().map(|v| v.abs()).sum();
    sx * sy / n as f64
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_unstable_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigDispersion {
    pub t_star: f64,
    pub violating_fraction: f64,
}

/// With `e = M y` and `t = median(e)`, the fraction of `i` with
/// `|e_i - t| >= sqrt(zeta) t`.
pub fn eig_dispersion(m: &Array2<f64>, y: &[f64], zeta: f64) -> Result<EigDispersion> {
    if m.ncols() != y.len() || m.nrows() == 0 {
        return Err(MmlError::ShapeMismatch(format!(
            "M is {}x{}, y has {} entries",
            m.nrows(),
            m.ncols(),
            y.len()
        )));
    }
    let e = m.dot(&ndarray::ArrayView1::from(y));
    let t_star = median(&mut e.to_vec());
    let band = zeta.sqrt() * t_star;
    // relative slack so that a constant M y never counts as a violation
    let slack = 1e-12 * t_star.abs();
    let violating = e
        .iter()
        .filter(|&&ei| (ei - t_star).abs() >= band && (ei - t_star).abs() > slack)
        .count();
    Ok(EigDispersion {
        t_star,
        violating_fraction: violating as f64 / e.len() as f64,
    })
}

/// Membership flags for the value-space regions `R1` (on `u` and on `v`)
/// and `R2` (on the pair).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct RegionFlags {
    pub in_r1_u: bool,
    pub in_r1_v: bool,
    pub in_r2: bool,
}

impl RegionFlags {
    pub fn all(&self) -> bool {
        self.in_r1_u && self.in_r1_v && self.in_r2
    }
}

/// `c1_lo ln n <= |w|_1 <= c1_hi n (ln n)^(-7/8)` for `w = u, v`, and
/// `u^T M v <= c2 (ln n)^(1/8)`. Boundaries are inclusive.
pub fn region_check(
    u: &[f64],
    v: &[f64],
    m: &Array2<f64>,
    c1_lo: f64,
    c1_hi: f64,
    c2: f64,
) -> Result<RegionFlags> {
    let n = u.len();
    if v.len() != n || m.dim() != (n, n) {
        return Err(MmlError::ShapeMismatch("u, v and M must agree on n".into()));
    }
    for (name, c) in [("c1_lo", c1_lo), ("c1_hi", c1_hi), ("c2", c2)] {
        if !(c > 0.0) {
            return Err(MmlError::InvalidArgument(format!("{name} must be positive")));
        }
    }
    let ln_n = (n as f64).ln();
    let in_r1 = |w: &[f64]| {
        let s: f64 = w.iter().sum();
        s >= c1_lo * ln_n && s <= c1_hi * n as f64 * ln_n.powf(-7.0 / 8.0)
    };
    let umv = ndarray::ArrayView1::from(u).dot(&m.dot(&ndarray::ArrayView1::from(v)));
    Ok(RegionFlags {
        in_r1_u: in_r1(u),
        in_r1_v: in_r1(v),
        in_r2: umv <= c2 * ln_n.powf(1.0 / 8.0),
    })
}

/// `4 exp(-2 n eps^2 / 9)`, the bound on `P(|G_hat - F|_inf > 2 delta + eps)`
/// for `n` independent draws whose CDFs are all within `delta` of `F`.
pub fn dkw_bound(n: usize, delta: f64, epsilon: f64) -> f64 {
    debug_assert!(delta >= 0.0 && epsilon > 0.0);
    4.0 * (-2.0 * n as f64 * epsilon * epsilon / 9.0).exp()
}

/// Fraction of matched men with `|R_i / (x_i phi_i) - 1| > theta`.
pub fn rank_value_ratio_report(outcome: &MatchingOutcome, phi: &[f64], theta: f64) -> f64 {
    let mut total = 0usize;
    let mut off = 0usize;
    for ((&r, &x), &p) in outcome.rank_men.iter().zip(&outcome.value_men).zip(phi) {
        if r == 0 || x <= 0.0 {
            continue;
        }
        total += 1;
        if (r as f64 / (x * p) - 1.0).abs() > theta {
            off += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        off as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exp_quantiles(rate: f64, n: usize) -> Vec<f64> {
        (1..=n)
            .map(|i| -(1.0 - (i as f64 - 0.5) / n as f64).ln() / rate)
            .collect()
    }

    #[test]
    fn quantile_sample_distance_is_half_step() {
        for n in [1, 10, 1000] {
            let d = ks_distance_to_exp(&exp_quantiles(2.0, n), 2.0).unwrap();
            assert!((d - 0.5 / n as f64).abs() < 1e-12, "n={n}: {d}");
        }
    }

    #[test]
    fn one_point_at_median() {
        let x = 2f64.ln() / 3.0;
        assert!((ks_distance_to_exp(&[x], 3.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn all_zero_sample_has_distance_one() {
        assert_eq!(ks_distance_to_exp(&[0.0; 5], 1.0).unwrap(), 1.0);
    }

    #[test]
    fn ks_errors() {
        assert!(matches!(ks_distance_to_exp(&[], 1.0), Err(MmlError::EmptySample)));
        assert!(matches!(ks_distance_to_exp(&[1.0], 0.0), Err(MmlError::NonPositiveRate(_))));
        assert!(matches!(best_fit_exponential(&[0.0, 0.0]), Err(MmlError::DegenerateSample)));
    }

    #[test]
    fn ecdf_is_right_continuous() {
        let e = EmpiricalCdf::new(&[1.0, 2.0, 2.0, 3.0]).unwrap();
        assert_eq!(e.eval(0.5), 0.0);
        assert_eq!(e.eval(2.0), 0.75);
        assert_eq!(e.eval(3.0), 1.0);
    }

    #[test]
    fn fit_recovers_rate_from_quantiles() {
        let n = 1000;
        let fit = best_fit_exponential(&exp_quantiles(3.0, n)).unwrap();
        assert!((2.9..=3.1).contains(&fit.lambda), "{fit:?}");
        assert!(fit.ks_distance <= 0.5 / n as f64 + 1e-6, "{fit:?}");
    }

    #[test]
    fn fit_is_scale_equivariant() {
        let xs: Vec<f64> = (1..200).map(|i| ((i * 37) % 101) as f64 / 17.0 + 0.01).collect();
        let base = best_fit_exponential(&xs).unwrap();
        let scaled: Vec<f64> = xs.iter().map(|x| x * 4.0).collect();
        let fit = best_fit_exponential(&scaled).unwrap();
        assert!((fit.lambda * 4.0 / base.lambda - 1.0).abs() < 1e-6);
        assert!((fit.ks_distance - base.ks_distance).abs() < 1e-9);
    }

    #[test]
    fn rescaled_ranks_basics() {
        assert_eq!(rescaled_ranks(&[1, 2, 3], &[1.0; 3]).unwrap(), vec![1.0, 2.0, 3.0]);
        assert_eq!(rescaled_ranks(&[2, 4], &[4.0, 4.0]).unwrap(), vec![0.5, 1.0]);
        assert!(matches!(rescaled_ranks(&[1], &[1.0, 2.0]), Err(MmlError::ShapeMismatch(_))));
    }

    #[test]
    fn hyperbola_basics() {
        let n = 9;
        let v = vec![1.0 / 3.0; n];
        assert!((hyperbola_product(&v, &v, n) - 1.0).abs() < 1e-12);
        assert_eq!(hyperbola_product(&[0.0; 4], &[1.0; 4], 4), 0.0);
    }

    #[test]
    fn constant_y_has_no_dispersion() {
        let n = 6;
        let m = Array2::from_shape_fn((n, n), |(i, j)| if (i + j) % 2 == 0 { 0.3 } else { 1.0 / 30.0 });
        // rows of m sum to 3*0.3 + 3/30 = 1
        let d = eig_dispersion(&m, &[2.5; 6], 0.01).unwrap();
        assert_eq!(d.violating_fraction, 0.0);
        assert!((d.t_star - 2.5).abs() < 1e-12);
        let j = Array2::from_elem((4, 4), 0.25);
        let d = eig_dispersion(&j, &[1.0, 5.0, 2.0, 9.0], 0.5).unwrap();
        assert_eq!(d.violating_fraction, 0.0);
    }

    #[test]
    fn region_boundaries() {
        let n = 10;
        let m = Array2::from_elem((n, n), 0.1);
        let z = vec![0.0; n];
        let f = region_check(&z, &z, &m, 1.0, 1.0, 1.0).unwrap();
        assert!(!f.in_r1_u && f.in_r2);
        let ln_n = (n as f64).ln();
        let mut u = vec![0.0; n];
        u[3] = 0.5 * ln_n;
        let f = region_check(&u, &u, &m, 0.5, 10.0, 1.0).unwrap();
        assert!(f.in_r1_u && f.in_r1_v);
        let f = region_check(&u, &u, &m, 0.5 + 1e-12, 10.0, 1.0).unwrap();
        assert!(!f.in_r1_u);
    }

    #[test]
    fn dkw_values() {
        // 4 e^-2
        assert!((dkw_bound(100, 0.0, 0.3) - 0.541_341_132_946_451).abs() < 1e-12);
        assert!(dkw_bound(100, 0.0, 50.0) < 1e-300);
        assert!(dkw_bound(200, 0.0, 0.1) < dkw_bound(100, 0.0, 0.1));
        assert!(dkw_bound(100, 0.0, 0.2) < dkw_bound(100, 0.0, 0.1));
    }

    #[test]
    fn exact_ratio_has_no_outliers() {
        let out = MatchingOutcome {
            value_men: vec![0.5, 0.25, 1.0],
            value_women: vec![0.0; 3],
            rank_men: vec![2, 1, 4],
            rank_women: vec![0; 3],
            proposal_count: None,
        };
        assert_eq!(rank_value_ratio_report(&out, &[4.0; 3], 1e-9), 0.0);
        assert_eq!(rank_value_ratio_report(&out, &[8.0; 3], 1e9), 0.0);
        assert!((rank_value_ratio_report(&out, &[8.0; 3], 0.1) - 1.0).abs() < 1e-12);
    }
}
