//! Latent values and preference profiles.
//!
//! `X[[i, j]] ~ Exp(a_ij)` is man `i`'s value for woman `j`, and
//! `Y[[j, i]] ~ Exp(b_ji)` is woman `j`'s value for man `i`. Lower is better.
//! Every cell draws from its own stream keyed by `(seed, "X" | "Y", row,
//! col)`, so a cell's value does not depend on the order cells are drawn in.

use ndarray::Array2;

use crate::error::{MmlError, Result};
use crate::market::{BalancedMarket, CanonicalMarket};
use crate::rng::StreamKey;

/// Realized latent values of a market.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentValues {
    x: Array2<f64>,
    y: Array2<f64>,
    seed: u64,
}

impl LatentValues {
    /// Wraps explicit value matrices: `x` is `n_men x n_women`, `y` is
    /// `n_women x n_men`. Entries must be finite and non-negative.
    pub fn new(x: Array2<f64>, y: Array2<f64>, seed: u64) -> Result<Self> {
        let (m, w) = x.dim();
        if y.dim() != (w, m) {
            return Err(MmlError::ShapeMismatch(format!(
                "x is {m}x{w}, y must be {w}x{m}, got {}x{}",
                y.nrows(),
                y.ncols()
            )));
        }
        for ((row, col), &value) in x.indexed_iter().chain(y.indexed_iter()) {
            if !(value >= 0.0 && value.is_finite()) {
                return Err(MmlError::InvalidArgument(format!(
                    "latent value at ({row}, {col}) is {value}"
                )));
            }
        }
        Ok(LatentValues { x, y, seed })
    }

    pub fn n_men(&self) -> usize {
        self.x.nrows()
    }
    pub fn n_women(&self) -> usize {
        self.x.ncols()
    }
    /// Men's values, `x[[i, j]]`.
    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }
    /// Women's values, `y[[j, i]]`.
    pub fn y(&self) -> &Array2<f64> {
        &self.y
    }
    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Fails with `DuplicateValue` if any agent's row has a tie.
    pub fn check_no_ties(&self) -> Result<()> {
        for (side, m) in [("men", &self.x), ("women", &self.y)] {
            for (row, r) in m.rows().into_iter().enumerate() {
                let mut v = r.to_vec();
                v.sort_unstable_by(f64::total_cmp);
                if v.windows(2).any(|w| w[0] == w[1]) {
                    return Err(MmlError::DuplicateValue { side, row });
                }
            }
        }
        Ok(())
    }
}

/// Draws `X_ij ~ Exp(a_rates[[i, j]])` and `Y_ji ~ Exp(b_rates[[j, i]])`.
pub fn sample_latent_with_rates(
    a_rates: &Array2<f64>,
    b_rates: &Array2<f64>,
    seed: u64,
) -> Result<LatentValues> {
    let key = StreamKey::new(seed);
    let kx = key.label("X");
    let ky = key.label("Y");
    let x = Array2::from_shape_fn(a_rates.dim(), |(i, j)| {
        -kx.index(i as u64).index(j as u64).uniform(0).ln() / a_rates[[i, j]]
    });
    let y = Array2::from_shape_fn(b_rates.dim(), |(j, i)| {
        -ky.index(j as u64).index(i as u64).uniform(0).ln() / b_rates[[j, i]]
    });
    let values = LatentValues::new(x, y, seed)?;
    values.check_no_ties()?;
    Ok(values)
}

/// Latent values at the balanced-form rates.
pub fn sample_latent(bal: &BalancedMarket, seed: u64) -> Result<LatentValues> {
    sample_latent_with_rates(bal.a(), bal.b(), seed)
}

/// Complete strict preference lists, best first, 0-based indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PreferenceProfile {
    men: Vec<Vec<usize>>,
    women: Vec<Vec<usize>>,
}

fn is_permutation(list: &[usize], n: usize) -> bool {
    if list.len() != n {
        return false;
    }
    let mut seen = vec![false; n];
    list.iter().all(|&k| k < n && !std::mem::replace(&mut seen[k], true))
}

impl PreferenceProfile {
    /// `men[i]` lists women best first, `women[j]` lists men best first.
    pub fn new(men: Vec<Vec<usize>>, women: Vec<Vec<usize>>) -> Result<Self> {
        let (n_men, n_women) = (men.len(), women.len());
        for (i, l) in men.iter().enumerate() {
            if !is_permutation(l, n_women) {
                return Err(MmlError::InvalidArgument(format!(
                    "man {i}'s list is not a permutation of {n_women} women"
                )));
            }
        }
        for (j, l) in women.iter().enumerate() {
            if !is_permutation(l, n_men) {
                return Err(MmlError::InvalidArgument(format!(
                    "woman {j}'s list is not a permutation of {n_men} men"
                )));
            }
        }
        Ok(PreferenceProfile { men, women })
    }

    pub fn n_men(&self) -> usize {
        self.men.len()
    }
    pub fn n_women(&self) -> usize {
        self.women.len()
    }
    pub fn men(&self) -> &[Vec<usize>] {
        &self.men
    }
    pub fn women(&self) -> &[Vec<usize>] {
        &self.women
    }

    /// The same market seen from the other side.
    pub fn swapped(&self) -> PreferenceProfile {
        PreferenceProfile {
            men: self.women.clone(),
            women: self.men.clone(),
        }
    }
}

fn argsort_row(row: ndarray::ArrayView1<f64>, side: &'static str, idx: usize) -> Result<Vec<usize>> {
    let mut order: Vec<usize> = (0..row.len()).collect();
    order.sort_unstable_by(|&a, &b| row[a].total_cmp(&row[b]));
    if order.windows(2).any(|w| row[w[0]] == row[w[1]]) {
        return Err(MmlError::DuplicateValue { side, row: idx });
    }
    Ok(order)
}

/// Each list is the ascending argsort of the agent's value row.
pub fn prefs_from_latent(values: &LatentValues) -> Result<PreferenceProfile> {
    let men = values
        .x()
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| argsort_row(r, "men", i))
        .collect::<Result<Vec<_>>>()?;
    let women = values
        .y()
        .rows()
        .into_iter()
        .enumerate()
        .map(|(j, r)| argsort_row(r, "women", j))
        .collect::<Result<Vec<_>>>()?;
    Ok(PreferenceProfile { men, women })
}

fn sequential_logit_list(weights: ndarray::ArrayView1<f64>, key: StreamKey) -> Vec<usize> {
    let mut remaining: Vec<(usize, f64)> = weights.iter().copied().enumerate().collect();
    let mut out = Vec::with_capacity(remaining.len());
    let mut counter = 0;
    while remaining.len() > 1 {
        let total: f64 = remaining.iter().map(|&(_, w)| w).sum();
        let target = key.uniform(counter) * total;
        counter += 1;
        let mut acc = 0.0;
        let mut pick = remaining.len() - 1;
        for (k, &(_, w)) in remaining.iter().enumerate() {
            acc += w;
            if target < acc {
                pick = k;
                break;
            }
        }
        out.push(remaining.remove(pick).0);
    }
    out.extend(remaining.into_iter().map(|(j, _)| j));
    out
}

/// Preference lists drawn by repeated sampling without replacement,
/// proportionally to canonical scores.
pub fn logit_sample_prefs_canonical(market: &CanonicalMarket, seed: u64) -> PreferenceProfile {
    let key = StreamKey::new(seed).label("logit");
    let km = key.label("men");
    let kw = key.label("women");
    let men = market
        .a_hat()
        .rows()
        .into_iter()
        .enumerate()
        .map(|(i, r)| sequential_logit_list(r, km.index(i as u64)))
        .collect();
    let women = market
        .b_hat()
        .rows()
        .into_iter()
        .enumerate()
        .map(|(j, r)| sequential_logit_list(r, kw.index(j as u64)))
        .collect();
    PreferenceProfile { men, women }
}

pub fn logit_sample_prefs(bal: &BalancedMarket, seed: u64) -> PreferenceProfile {
    logit_sample_prefs_canonical(bal.canonical(), seed)
}
