//! Market construction: canonical form, Sinkhorn balancing, fitness and
//! contiguity.
//!
//! Men index rows of `a_hat` (`n_men x n_women`); women index rows of
//! `b_hat` (`n_women x n_men`). Both matrices are row-stochastic. The
//! balanced form rescales each row so that `M = n^-1 A o B^T` is
//! bistochastic; `phi` and `psi` are the row scalings of the men's and
//! women's sides.

use ndarray::{Array1, Array2, Axis};

use crate::error::{MmlError, Result};
use crate::rng::StreamKey;

/// Row sums of a canonical market must be within this of 1.
pub const ROW_SUM_TOL: f64 = 1e-12;
pub const DEFAULT_SINKHORN_TOL: f64 = 1e-10;
pub const DEFAULT_SINKHORN_MAX_ITERS: usize = 10_000;

/// Row-stochastic score matrices of the logit preference model.
#[derive(Clone, Debug, PartialEq)]
pub struct CanonicalMarket {
    a_hat: Array2<f64>,
    b_hat: Array2<f64>,
}

fn check_positive(m: &Array2<f64>) -> Result<()> {
    for ((row, col), &value) in m.indexed_iter() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(MmlError::NonPositiveEntry { row, col, value });
        }
    }
    Ok(())
}

fn check_shapes(a: &Array2<f64>, b: &Array2<f64>) -> Result<()> {
    let (m, w) = a.dim();
    if b.dim() != (w, m) {
        return Err(MmlError::ShapeMismatch(format!(
            "a is {m}x{w}, so b must be {w}x{m}, got {}x{}",
            b.nrows(),
            b.ncols()
        )));
    }
    if m == 0 || w == 0 {
        return Err(MmlError::ShapeMismatch("market has no agents".into()));
    }
    Ok(())
}

fn row_normalize(m: &Array2<f64>) -> Array2<f64> {
    let mut out = m.clone();
    for mut row in out.rows_mut() {
        let s: f64 = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    out
}

impl CanonicalMarket {
    /// Normalizes each row of positive raw scores. Multiplying a raw row by
    /// a constant yields the same market.
    pub fn from_raw(a_raw: &Array2<f64>, b_raw: &Array2<f64>) -> Result<Self> {
        check_shapes(a_raw, b_raw)?;
        check_positive(a_raw)?;
        check_positive(b_raw)?;
        Ok(CanonicalMarket {
            a_hat: row_normalize(a_raw),
            b_hat: row_normalize(b_raw),
        })
    }

    /// Accepts matrices that are already row-stochastic, without touching
    /// their bits. Fails with `InvalidArgument` if some row is off by more
    /// than [`ROW_SUM_TOL`].
    pub fn from_canonical(a_hat: Array2<f64>, b_hat: Array2<f64>) -> Result<Self> {
        check_shapes(&a_hat, &b_hat)?;
        check_positive(&a_hat)?;
        check_positive(&b_hat)?;
        for (name, m) in [("a_hat", &a_hat), ("b_hat", &b_hat)] {
            for (i, row) in m.rows().into_iter().enumerate() {
                let s = row.sum();
                if (s - 1.0).abs() > ROW_SUM_TOL {
                    return Err(MmlError::InvalidArgument(format!(
                        "{name} row {i} sums to {s}, not 1"
                    )));
                }
            }
        }
        Ok(CanonicalMarket { a_hat, b_hat })
    }

    pub fn n_men(&self) -> usize {
        self.a_hat.nrows()
    }

    pub fn n_women(&self) -> usize {
        self.a_hat.ncols()
    }

    pub fn is_square(&self) -> bool {
        self.n_men() == self.n_women()
    }

    /// Men's canonical scores, `n_men x n_women`.
    pub fn a_hat(&self) -> &Array2<f64> {
        &self.a_hat
    }

    /// Women's canonical scores, `n_women x n_men`.
    pub fn b_hat(&self) -> &Array2<f64> {
        &self.b_hat
    }
}

/// Free-function form of [`CanonicalMarket::from_raw`].
pub fn canonical_from_raw(a_raw: &Array2<f64>, b_raw: &Array2<f64>) -> Result<CanonicalMarket> {
    CanonicalMarket::from_raw(a_raw, b_raw)
}

/// Every agent scores every partner equally.
pub fn uniform_market(n_men: usize, n_women: usize) -> Result<CanonicalMarket> {
    CanonicalMarket::from_raw(
        &Array2::ones((n_men, n_women)),
        &Array2::ones((n_women, n_men)),
    )
}

/// Public scores: every man uses the score vector `a` over women, every
/// woman uses `b` over men.
pub fn public_scores_market(a: &[f64], b: &[f64]) -> Result<CanonicalMarket> {
    let (n_men, n_women) = (b.len(), a.len());
    let a_raw = Array2::from_shape_fn((n_men, n_women), |(_, j)| a[j]);
    let b_raw = Array2::from_shape_fn((n_women, n_men), |(_, i)| b[i]);
    CanonicalMarket::from_raw(&a_raw, &b_raw)
}

/// Raw scores drawn log-uniformly on `[1/c, c]` and row-normalized.
pub fn random_cbounded_market(n: usize, c_target: f64, seed: u64) -> Result<CanonicalMarket> {
    random_cbounded_rect(n, n, c_target, seed)
}

/// Rectangular version of [`random_cbounded_market`].
pub fn random_cbounded_rect(
    n_men: usize,
    n_women: usize,
    c_target: f64,
    seed: u64,
) -> Result<CanonicalMarket> {
    if !(c_target >= 1.0 && c_target.is_finite()) {
        return Err(MmlError::InvalidArgument(format!(
            "c_target must be >= 1, got {c_target}"
        )));
    }
    let key = StreamKey::new(seed).label("cbounded");
    let log_c = c_target.ln();
    let draw = |side: &str, i: usize, j: usize| {
        let u = key.label(side).index(i as u64).index(j as u64).uniform(0);
        (log_c * (2.0 * u - 1.0)).exp()
    };
    let a_raw = Array2::from_shape_fn((n_men, n_women), |(i, j)| draw("a", i, j));
    let b_raw = Array2::from_shape_fn((n_women, n_men), |(j, i)| draw("b", j, i));
    CanonicalMarket::from_raw(&a_raw, &b_raw)
}

/// Extends a market with `n - k` men and `n` women by `k` men who score all
/// women 1 and are scored 1 by every woman. Women's existing rows are
/// first put on the same unit scale (mean raw score 1 per row) so the new
/// men are ex-ante average partners.
pub fn backfill_imbalanced(market: &CanonicalMarket, k: usize) -> Result<CanonicalMarket> {
    let (n_real, n) = (market.n_men(), market.n_women());
    if n_real + k != n {
        return Err(MmlError::ShapeMismatch(format!(
            "backfilling {k} men onto {n_real} men and {n} women does not give a square market"
        )));
    }
    if k == 0 {
        return Ok(market.clone());
    }
    let mut a_raw = Array2::ones((n, n));
    a_raw
        .slice_mut(ndarray::s![..n_real, ..])
        .assign(market.a_hat());
    let mut b_raw = Array2::ones((n, n));
    b_raw
        .slice_mut(ndarray::s![.., ..n_real])
        .assign(&(market.b_hat() * n_real as f64));
    CanonicalMarket::from_raw(&a_raw, &b_raw)
}

/// Balanced form of a square market.
#[derive(Clone, Debug)]
pub struct BalancedMarket {
    canonical: CanonicalMarket,
    a: Array2<f64>,
    b: Array2<f64>,
    m: Array2<f64>,
    phi: Array1<f64>,
    psi: Array1<f64>,
    c_bound: f64,
    sinkhorn_iters: usize,
    residual: f64,
}

impl BalancedMarket {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }
    pub fn canonical(&self) -> &CanonicalMarket {
        &self.canonical
    }
    /// Men's balanced scores; `a[[i, j]]` is the rate of `X_ij`.
    pub fn a(&self) -> &Array2<f64> {
        &self.a
    }
    /// Women's balanced scores; `b[[j, i]]` is the rate of `Y_ji`.
    pub fn b(&self) -> &Array2<f64> {
        &self.b
    }
    /// Bistochastic mutual matrix.
    pub fn m(&self) -> &Array2<f64> {
        &self.m
    }
    pub fn phi(&self) -> &Array1<f64> {
        &self.phi
    }
    pub fn psi(&self) -> &Array1<f64> {
        &self.psi
    }
    pub fn c_bound(&self) -> f64 {
        self.c_bound
    }
    pub fn sinkhorn_iters(&self) -> usize {
        self.sinkhorn_iters
    }
    pub fn residual(&self) -> f64 {
        self.residual
    }
}

/// Largest deviation of any row or column sum of `m` from 1.
pub fn bistochastic_residual(m: &Array2<f64>) -> f64 {
    let rows = m.sum_axis(Axis(1));
    let cols = m.sum_axis(Axis(0));
    rows.iter()
        .chain(cols.iter())
        .fold(0.0_f64, |acc, s| acc.max((s - 1.0).abs()))
}

fn geometric_mean(v: &Array1<f64>) -> f64 {
    (v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64).exp()
}

/// Alternating row/column scaling of `a_hat o b_hat^T` until every row and
/// column sum is within `tol` of 1.
///
/// The scale shared between `phi` and `psi` is fixed by equating their
/// geometric means; with that gauge the uniform market gets
/// `phi = psi = n`. `phi_i = sum_j A_ij` holds by construction.
pub fn sinkhorn_balance(
    market: &CanonicalMarket,
    tol: f64,
    max_iters: usize,
) -> Result<BalancedMarket> {
    if !market.is_square() {
        return Err(MmlError::NonSquare {
            n_men: market.n_men(),
            n_women: market.n_women(),
        });
    }
    if !(tol > 0.0) {
        return Err(MmlError::InvalidArgument(format!("tol must be > 0, got {tol}")));
    }
    let n = market.n_men();
    let a_hat = market.a_hat();
    let b_hat = market.b_hat();
    let kernel = Array2::from_shape_fn((n, n), |(i, j)| a_hat[[i, j]] * b_hat[[j, i]]);

    let mut r = Array1::<f64>::ones(n);
    let mut s = Array1::<f64>::ones(n);
    let mut iters = 0;
    let mut residual = f64::INFINITY;
    loop {
        // rows: (K s)_i gives the current row sums r_i (K s)_i
        let ks = kernel.dot(&s);
        if iters > 0 {
            residual = r
                .iter()
                .zip(ks.iter())
                .fold(0.0_f64, |acc, (ri, ki)| acc.max((ri * ki - 1.0).abs()));
            if residual <= tol {
                break;
            }
        }
        if iters == max_iters {
            return Err(MmlError::NoConvergence { iters, residual });
        }
        r = ks.mapv(|v| 1.0 / v);
        let ktr = kernel.t().dot(&r);
        s = ktr.mapv(|v| 1.0 / v);
        iters += 1;
    }

    let g = (n as f64 * geometric_mean(&s) / geometric_mean(&r)).sqrt();
    let phi_scale = &r * g;
    let psi_scale = &s * (n as f64 / g);

    let a = Array2::from_shape_fn((n, n), |(i, j)| phi_scale[i] * a_hat[[i, j]]);
    let b = Array2::from_shape_fn((n, n), |(j, i)| psi_scale[j] * b_hat[[j, i]]);
    let m = Array2::from_shape_fn((n, n), |(i, j)| a[[i, j]] * b[[j, i]] / n as f64);
    let phi = a.sum_axis(Axis(1));
    let psi = b.sum_axis(Axis(1));
    let residual = bistochastic_residual(&m);
    let c_bound = contiguity_of(&a, &b, &m);
    Ok(BalancedMarket {
        canonical: market.clone(),
        a,
        b,
        m,
        phi,
        psi,
        c_bound,
        sinkhorn_iters: iters,
        residual,
    })
}

/// [`sinkhorn_balance`] with the default tolerance and iteration cap.
pub fn balance(market: &CanonicalMarket) -> Result<BalancedMarket> {
    sinkhorn_balance(market, DEFAULT_SINKHORN_TOL, DEFAULT_SINKHORN_MAX_ITERS)
}

/// Smallest `C` with every `a_ij`, `b_ji` and `n m_ij` inside `[1/C, C]`.
pub fn contiguity_of(a: &Array2<f64>, b: &Array2<f64>, m: &Array2<f64>) -> f64 {
    let n = m.nrows() as f64;
    let spread = |v: f64| v.max(1.0 / v);
    let ca = a.iter().copied().map(spread).fold(1.0, f64::max);
    let cb = b.iter().copied().map(spread).fold(1.0, f64::max);
    let cm = m.iter().map(|&v| spread(n * v)).fold(1.0, f64::max);
    ca.max(cb).max(cm)
}

pub fn contiguity_constant(bal: &BalancedMarket) -> f64 {
    contiguity_of(bal.a(), bal.b(), bal.m())
}
