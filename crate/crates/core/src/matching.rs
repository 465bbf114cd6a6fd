//! Matchings, deferred acceptance, stability checks, brute-force
//! enumeration, truncation and approximate-stability certificates.

use crate::error::{MmlError, Result};
use crate::sampling::{LatentValues, PreferenceProfile};

/// Largest market [`enumerate_stable`] accepts.
pub const MAX_ENUMERATE_N: usize = 10;
/// Largest market [`is_alpha_stable_exact`] accepts.
pub const MAX_EXACT_ALPHA_N: usize = 12;

/// Which side proposes in deferred acceptance.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Side {
    Men,
    Women,
}

/// Where blocking pairs are looked for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scope {
    /// Every agent of the market takes part; an unmatched agent prefers any
    /// partner to staying single.
    Market,
    /// Only matched agents take part (a stable sub-market).
    Support,
}

/// A (possibly partial) one-to-one matching between men and women.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matching {
    man_partner: Vec<Option<usize>>,
    woman_partner: Vec<Option<usize>>,
    scope: Scope,
}

impl Matching {
    /// Builds a matching from `(man, woman)` pairs; fails unless the pairs
    /// form a bijection between their supports.
    pub fn from_pairs(
        n_men: usize,
        n_women: usize,
        pairs: &[(usize, usize)],
        scope: Scope,
    ) -> Result<Self> {
        let mut man_partner = vec![None; n_men];
        let mut woman_partner = vec![None; n_women];
        for &(i, j) in pairs {
            if i >= n_men || j >= n_women {
                return Err(MmlError::InvalidArgument(format!(
                    "pair ({i}, {j}) outside a {n_men}x{n_women} market"
                )));
            }
            if man_partner[i].is_some() || woman_partner[j].is_some() {
                return Err(MmlError::InvalidArgument(format!(
                    "pair ({i}, {j}) reuses a matched agent"
                )));
            }
            man_partner[i] = Some(j);
            woman_partner[j] = Some(i);
        }
        Ok(Matching {
            man_partner,
            woman_partner,
            scope,
        })
    }

    /// A perfect matching of a square market, `partner[i]` = man `i`'s wife.
    pub fn perfect(partner: &[usize]) -> Result<Self> {
        let pairs: Vec<_> = partner.iter().copied().enumerate().collect();
        Self::from_pairs(partner.len(), partner.len(), &pairs, Scope::Market)
    }

    fn from_partner_vec(man_partner: Vec<Option<usize>>, n_women: usize, scope: Scope) -> Self {
        let mut woman_partner = vec![None; n_women];
        for (i, p) in man_partner.iter().enumerate() {
            if let Some(j) = *p {
                woman_partner[j] = Some(i);
            }
        }
        Matching {
            man_partner,
            woman_partner,
            scope,
        }
    }

    pub fn n_men(&self) -> usize {
        self.man_partner.len()
    }
    pub fn n_women(&self) -> usize {
        self.woman_partner.len()
    }
    pub fn scope(&self) -> Scope {
        self.scope
    }
    pub fn with_scope(mut self, scope: Scope) -> Self {
        self.scope = scope;
        self
    }
    pub fn partner_of_man(&self, i: usize) -> Option<usize> {
        self.man_partner[i]
    }
    pub fn partner_of_woman(&self, j: usize) -> Option<usize> {
        self.woman_partner[j]
    }
    pub fn man_partners(&self) -> &[Option<usize>] {
        &self.man_partner
    }
    /// Number of matched pairs.
    pub fn size(&self) -> usize {
        self.man_partner.iter().filter(|p| p.is_some()).count()
    }
    /// Both supports are the whole market.
    pub fn is_full(&self) -> bool {
        self.man_partner.iter().all(Option::is_some) && self.woman_partner.iter().all(Option::is_some)
    }
    pub fn men_support(&self) -> Vec<usize> {
        (0..self.n_men()).filter(|&i| self.man_partner[i].is_some()).collect()
    }
    pub fn women_support(&self) -> Vec<usize> {
        (0..self.n_women()).filter(|&j| self.woman_partner[j].is_some()).collect()
    }
    /// Matched pairs sorted by man.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.man_partner
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|j| (i, j)))
            .collect()
    }

    /// Partial matching induced on the given men and their partners.
    pub fn restrict_to_men(&self, men: &[usize]) -> Matching {
        let mut man_partner = vec![None; self.n_men()];
        for &i in men {
            man_partner[i] = self.man_partner[i];
        }
        Matching::from_partner_vec(man_partner, self.n_women(), Scope::Support)
    }

    fn check_dims(&self, values: &LatentValues) {
        assert_eq!(
            (self.n_men(), self.n_women()),
            (values.n_men(), values.n_women()),
            "matching and latent values describe different markets"
        );
    }
}

/// Per-agent values and ranks under a matching. Unmatched agents get value
/// 0 and rank 0.
#[derive(Clone, Debug, PartialEq)]
pub struct MatchingOutcome {
    pub value_men: Vec<f64>,
    pub value_women: Vec<f64>,
    pub rank_men: Vec<usize>,
    pub rank_women: Vec<usize>,
    pub proposal_count: Option<u64>,
}

impl MatchingOutcome {
    pub fn with_proposals(mut self, proposals: u64) -> Self {
        self.proposal_count = Some(proposals);
        self
    }
}

/// A man and a woman who both strictly prefer each other to their partners.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct BlockingPair {
    pub man: usize,
    pub woman: usize,
}

/// Output of [`deferred_acceptance`].
#[derive(Clone, Debug)]
pub struct DaResult {
    pub matching: Matching,
    pub proposals: u64,
}

/// Proposer-side assignment of a proposal-queue run.
fn propose(proposer_lists: &[Vec<usize>], receiver_lists: &[Vec<usize>]) -> (Vec<Option<usize>>, u64) {
    let (n_p, n_r) = (proposer_lists.len(), receiver_lists.len());
    // receiver_rank[r * n_p + p]: position of proposer p on receiver r's list
    let mut receiver_rank = vec![0u32; n_r * n_p];
    for (r, list) in receiver_lists.iter().enumerate() {
        for (pos, &p) in list.iter().enumerate() {
            receiver_rank[r * n_p + p] = pos as u32;
        }
    }
    let mut next = vec![0usize; n_p];
    let mut holder: Vec<Option<usize>> = vec![None; n_r];
    let mut free: Vec<usize> = (0..n_p).rev().collect();
    let mut proposals = 0u64;
    while let Some(p) = free.pop() {
        let list = &proposer_lists[p];
        if next[p] == list.len() {
            continue;
        }
        let r = list[next[p]];
        next[p] += 1;
        proposals += 1;
        match holder[r] {
            None => holder[r] = Some(p),
            Some(q) => {
                if receiver_rank[r * n_p + p] < receiver_rank[r * n_p + q] {
                    holder[r] = Some(p);
                    free.push(q);
                } else {
                    free.push(p);
                }
            }
        }
    }
    let mut assignment = vec![None; n_p];
    for (r, h) in holder.iter().enumerate() {
        if let Some(p) = *h {
            assignment[p] = Some(r);
        }
    }
    (assignment, proposals)
}

/// Gale-Shapley deferred acceptance. Men-proposing yields the man-optimal
/// stable matching, women-proposing the woman-optimal one. Rectangular
/// markets leave some agents of the long side single.
pub fn deferred_acceptance(prefs: &PreferenceProfile, side: Side) -> DaResult {
    let (n_men, n_women) = (prefs.n_men(), prefs.n_women());
    let (man_partner, proposals) = match side {
        Side::Men => propose(prefs.men(), prefs.women()),
        Side::Women => {
            let (assign, proposals) = propose(prefs.women(), prefs.men());
            let mut man_partner = vec![None; n_men];
            for (j, p) in assign.iter().enumerate() {
                if let Some(i) = *p {
                    man_partner[i] = Some(j);
                }
            }
            (man_partner, proposals)
        }
    };
    DaResult {
        matching: Matching::from_partner_vec(man_partner, n_women, Scope::Market),
        proposals,
    }
}

/// Values and full-market ranks of every agent under `mu`.
pub fn outcome_of(mu: &Matching, values: &LatentValues) -> MatchingOutcome {
    mu.check_dims(values);
    let (x, y) = (values.x(), values.y());
    let mut value_men = vec![0.0; mu.n_men()];
    let mut rank_men = vec![0; mu.n_men()];
    for (i, p) in mu.man_partners().iter().enumerate() {
        if let Some(j) = *p {
            let v = x[[i, j]];
            value_men[i] = v;
            rank_men[i] = x.row(i).iter().filter(|&&w| w <= v).count();
        }
    }
    let mut value_women = vec![0.0; mu.n_women()];
    let mut rank_women = vec![0; mu.n_women()];
    for j in 0..mu.n_women() {
        if let Some(i) = mu.partner_of_woman(j) {
            let v = y[[j, i]];
            value_women[j] = v;
            rank_women[j] = y.row(j).iter().filter(|&&w| w <= v).count();
        }
    }
    MatchingOutcome {
        value_men,
        value_women,
        rank_men,
        rank_women,
        proposal_count: None,
    }
}

fn blocking_scan(mu: &Matching, values: &LatentValues, first_only: bool) -> Vec<BlockingPair> {
    mu.check_dims(values);
    let (x, y) = (values.x(), values.y());
    let restricted = mu.scope == Scope::Support;
    // the value each woman would have to beat; None = not in the market
    let woman_bar: Vec<Option<f64>> = (0..mu.n_women())
        .map(|j| match mu.woman_partner[j] {
            Some(i) => Some(y[[j, i]]),
            None if restricted => None,
            None => Some(f64::INFINITY),
        })
        .collect();
    let mut out = Vec::new();
    for i in 0..mu.n_men() {
        let man_bar = match mu.man_partner[i] {
            Some(j) => x[[i, j]],
            None if restricted => continue,
            None => f64::INFINITY,
        };
        for (j, bar) in woman_bar.iter().enumerate() {
            let Some(bar) = *bar else { continue };
            if mu.man_partner[i] == Some(j) {
                continue;
            }
            if x[[i, j]] < man_bar && y[[j, i]] < bar {
                out.push(BlockingPair { man: i, woman: j });
                if first_only {
                    return out;
                }
            }
        }
    }
    out
}

/// All blocking pairs, ordered by man then woman. For [`Scope::Support`]
/// matchings only matched agents are considered.
pub fn find_blocking_pairs(mu: &Matching, values: &LatentValues) -> Vec<BlockingPair> {
    blocking_scan(mu, values, false)
}

pub fn is_stable(mu: &Matching, values: &LatentValues) -> bool {
    blocking_scan(mu, values, true).is_empty()
}

/// `rank[a][b]` = position of `b` on `a`'s list.
fn rank_tables(lists: &[Vec<usize>]) -> Vec<Vec<usize>> {
    lists
        .iter()
        .map(|l| {
            let mut r = vec![0; l.len()];
            for (pos, &b) in l.iter().enumerate() {
                r[b] = pos;
            }
            r
        })
        .collect()
}

struct Enumerator {
    man_rank: Vec<Vec<usize>>,
    woman_rank: Vec<Vec<usize>>,
    partner: Vec<usize>,
    taken: Vec<bool>,
    found: Vec<Vec<usize>>,
}

impl Enumerator {
    fn consistent(&self, i: usize, j: usize) -> bool {
        for ip in 0..i {
            let jp = self.partner[ip];
            // (i, jp): i likes jp better and jp likes i better than ip
            if self.man_rank[i][jp] < self.man_rank[i][j] && self.woman_rank[jp][i] < self.woman_rank[jp][ip] {
                return false;
            }
            if self.man_rank[ip][j] < self.man_rank[ip][jp] && self.woman_rank[j][ip] < self.woman_rank[j][i] {
                return false;
            }
        }
        true
    }

    fn single_women_ok(&self) -> bool {
        // an unmatched woman blocks with any man who prefers her
        (0..self.taken.len()).filter(|&w| !self.taken[w]).all(|w| {
            self.partner
                .iter()
                .enumerate()
                .all(|(i, &j)| self.man_rank[i][w] > self.man_rank[i][j])
        })
    }

    fn search(&mut self, i: usize) {
        if i == self.man_rank.len() {
            if self.single_women_ok() {
                self.found.push(self.partner.clone());
            }
            return;
        }
        for j in 0..self.taken.len() {
            if self.taken[j] || !self.consistent(i, j) {
                continue;
            }
            self.taken[j] = true;
            self.partner.push(j);
            self.search(i + 1);
            self.partner.pop();
            self.taken[j] = false;
        }
    }
}

fn enumerate_short_men(prefs: &PreferenceProfile) -> Vec<Vec<usize>> {
    let mut e = Enumerator {
        man_rank: rank_tables(prefs.men()),
        woman_rank: rank_tables(prefs.women()),
        partner: Vec::with_capacity(prefs.n_men()),
        taken: vec![false; prefs.n_women()],
        found: Vec::new(),
    };
    e.search(0);
    e.found
}

/// Every stable matching, by backtracking with blocking-pair pruning, in
/// lexicographic order of the men's partner vectors.
pub fn enumerate_stable(prefs: &PreferenceProfile) -> Result<Vec<Matching>> {
    let (n_men, n_women) = (prefs.n_men(), prefs.n_women());
    let n = n_men.max(n_women);
    if n > MAX_ENUMERATE_N {
        return Err(MmlError::TooLarge {
            n,
            max: MAX_ENUMERATE_N,
        });
    }
    if n_men <= n_women {
        return Ok(enumerate_short_men(prefs)
            .into_iter()
            .map(|p| Matching::from_partner_vec(p.into_iter().map(Some).collect(), n_women, Scope::Market))
            .collect());
    }
    let mut out: Vec<Matching> = enumerate_short_men(&prefs.swapped())
        .into_iter()
        .map(|husband| {
            let mut man_partner = vec![None; n_men];
            for (j, i) in husband.into_iter().enumerate() {
                man_partner[i] = Some(j);
            }
            Matching::from_partner_vec(man_partner, n_women, Scope::Market)
        })
        .collect();
    out.sort_by(|a, b| a.man_partner.cmp(&b.man_partner));
    Ok(out)
}

/// Result of [`truncate_delta`].
#[derive(Clone, Debug)]
pub struct Truncation {
    pub partial: Matching,
    /// Men's values on the kept men, zero elsewhere.
    pub x_delta: Vec<f64>,
    /// Women's values on the kept men's partners, zero elsewhere.
    pub y_delta: Vec<f64>,
}

/// `floor(x)` that tolerates representation error just below an integer.
pub(crate) fn floor_count(x: f64) -> usize {
    (x + 1e-9).floor().max(0.0) as usize
}

/// Drops the `floor(delta n / 2)` least happy men and women (largest
/// values), then keeps the `n - floor(delta n)` lowest-indexed men among
/// those left, together with their partners.
pub fn truncate_delta(mu: &Matching, outcome: &MatchingOutcome, delta: f64) -> Result<Truncation> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(MmlError::DeltaOutOfRange(delta));
    }
    if !mu.is_full() || mu.n_men() != mu.n_women() {
        return Err(MmlError::InvalidArgument(
            "truncation needs a perfect matching of a square market".into(),
        ));
    }
    let n = mu.n_men();
    let half = floor_count(delta * n as f64 / 2.0);
    let keep = n - floor_count(delta * n as f64);

    let least_happy = |values: &[f64]| {
        let mut idx: Vec<usize> = (0..values.len()).collect();
        idx.sort_by(|&a, &b| values[b].total_cmp(&values[a]).then(a.cmp(&b)));
        idx.truncate(half);
        idx
    };
    let mut excluded = vec![false; n];
    for i in least_happy(&outcome.value_men) {
        excluded[i] = true;
    }
    for j in least_happy(&outcome.value_women) {
        excluded[mu.woman_partner[j].expect("full matching")] = true;
    }
    let kept: Vec<usize> = (0..n).filter(|&i| !excluded[i]).take(keep).collect();
    debug_assert_eq!(kept.len(), keep);

    let partial = mu.restrict_to_men(&kept);
    let mut x_delta = vec![0.0; n];
    let mut y_delta = vec![0.0; n];
    for &i in &kept {
        let j = mu.man_partner[i].expect("full matching");
        x_delta[i] = outcome.value_men[i];
        y_delta[j] = outcome.value_women[j];
    }
    Ok(Truncation {
        partial,
        x_delta,
        y_delta,
    })
}

/// Output of [`greedy_alpha_certificate`].
#[derive(Clone, Debug)]
pub struct AlphaCertificate {
    /// Removed pairs over `n`; an upper bound on the least feasible alpha.
    pub alpha_upper: f64,
    /// The stable part that remains.
    pub stable_part: Matching,
    /// Men whose pairs were removed, in removal order.
    pub removed_men: Vec<usize>,
}

/// Repeatedly removes the pair of the man involved in the most blocking
/// pairs (lowest index on ties) until the remaining sub-matching is stable.
pub fn greedy_alpha_certificate(mu: &Matching, values: &LatentValues) -> AlphaCertificate {
    let n = mu.n_men();
    let mut current = mu.clone().with_scope(Scope::Support);
    let mut removed_men = Vec::new();
    loop {
        let blocking = find_blocking_pairs(&current, values);
        if blocking.is_empty() {
            break;
        }
        let mut degree = vec![0usize; n];
        for bp in &blocking {
            degree[bp.man] += 1;
        }
        let worst = (0..n)
            .max_by(|&a, &b| degree[a].cmp(&degree[b]).then(b.cmp(&a)))
            .expect("non-empty market");
        let j = current.man_partner[worst].take().expect("blocking man is matched");
        current.woman_partner[j] = None;
        removed_men.push(worst);
    }
    AlphaCertificate {
        alpha_upper: removed_men.len() as f64 / n.max(1) as f64,
        stable_part: current,
        removed_men,
    }
}

/// Whether some set of at least `(1 - alpha) n` matched pairs of `mu`
/// induces a stable sub-matching. Exhaustive over pair subsets.
pub fn is_alpha_stable_exact(mu: &Matching, values: &LatentValues, alpha: f64) -> Result<bool> {
    let n = mu.n_men();
    if n > MAX_EXACT_ALPHA_N {
        return Err(MmlError::TooLarge {
            n,
            max: MAX_EXACT_ALPHA_N,
        });
    }
    let needed = ((1.0 - alpha) * n as f64 - 1e-9).ceil().max(0.0) as usize;
    Ok(largest_stable_part(mu, values)? >= needed)
}

/// Size of the largest stable sub-matching of `mu`, by exhaustive search.
pub fn largest_stable_part(mu: &Matching, values: &LatentValues) -> Result<usize> {
    let n = mu.n_men();
    if n > MAX_EXACT_ALPHA_N {
        return Err(MmlError::TooLarge {
            n,
            max: MAX_EXACT_ALPHA_N,
        });
    }
    let matched = mu.men_support();
    let mut best = 0;
    for mask in 0u32..(1u32 << matched.len()) {
        let size = mask.count_ones() as usize;
        if size <= best {
            continue;
        }
        let men: Vec<usize> = matched
            .iter()
            .enumerate()
            .filter(|(k, _)| mask & (1 << k) != 0)
            .map(|(_, &i)| i)
            .collect();
        if is_stable(&mu.restrict_to_men(&men), values) {
            best = size;
        }
    }
    Ok(best)
}

/// Smallest alpha for which `mu` is alpha-stable.
pub fn min_alpha_exact(mu: &Matching, values: &LatentValues) -> Result<f64> {
    let n = mu.n_men();
    Ok((n - largest_stable_part(mu, values)?) as f64 / n.max(1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market::{balance, random_cbounded_market, uniform_market};
    use crate::sampling::{prefs_from_latent, sample_latent};
    use ndarray::array;

    fn random_instance(n: usize, seed: u64) -> (LatentValues, PreferenceProfile) {
        let bal = balance(&random_cbounded_market(n, 2.0, seed).unwrap()).unwrap();
        let v = sample_latent(&bal, seed.wrapping_mul(31) + 7).unwrap();
        let p = prefs_from_latent(&v).unwrap();
        (v, p)
    }

    #[test]
    fn single_pair_market() {
        let p = PreferenceProfile::new(vec![vec![0]], vec![vec![0]]).unwrap();
        let da = deferred_acceptance(&p, Side::Men);
        assert_eq!(da.matching.pairs(), vec![(0, 0)]);
        assert_eq!(da.proposals, 1);
        assert_eq!(enumerate_stable(&p).unwrap().len(), 1);
    }

    #[test]
    fn crafted_two_by_two_blocking_pair() {
        // both men prefer woman 0, she prefers man 1
        let x = array![[0.1, 0.5], [0.2, 0.6]];
        let y = array![[0.9, 0.3], [0.1, 0.2]];
        let v = LatentValues::new(x, y, 0).unwrap();
        let mu = Matching::perfect(&[0, 1]).unwrap();
        assert_eq!(find_blocking_pairs(&mu, &v), vec![BlockingPair { man: 1, woman: 0 }]);
        assert!(!is_stable(&mu, &v));
    }

    #[test]
    fn da_outputs_are_stable_and_in_enumeration() {
        for seed in 0..40 {
            let n = 2 + (seed as usize % 6);
            let (v, p) = random_instance(n, seed);
            let all = enumerate_stable(&p).unwrap();
            for side in [Side::Men, Side::Women] {
                let da = deferred_acceptance(&p, side);
                assert!(find_blocking_pairs(&da.matching, &v).is_empty());
                assert!(all.contains(&da.matching));
            }
        }
    }

    #[test]
    fn enumeration_matches_exhaustive_filter() {
        // every permutation, filtered by the value-based stability check
        for seed in 0..30 {
            let n = 1 + (seed as usize % 6);
            let (v, p) = random_instance(n, 100 + seed);
            let listed = enumerate_stable(&p).unwrap();
            let mut brute = Vec::new();
            let mut perm: Vec<usize> = (0..n).collect();
            permutations(&mut perm, 0, &mut |q| {
                let m = Matching::perfect(q).unwrap();
                if is_stable(&m, &v) {
                    brute.push(m);
                }
            });
            brute.sort_by(|a, b| a.man_partners().cmp(b.man_partners()));
            assert_eq!(listed, brute);
        }
    }

    fn permutations(v: &mut Vec<usize>, k: usize, f: &mut dyn FnMut(&[usize])) {
        if k == v.len() {
            f(v);
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            permutations(v, k + 1, f);
            v.swap(k, i);
        }
    }

    #[test]
    fn enumerate_rejects_large() {
        let n = 11;
        let lists: Vec<Vec<usize>> = (0..n).map(|_| (0..n).collect()).collect();
        let p = PreferenceProfile::new(lists.clone(), lists).unwrap();
        assert!(matches!(enumerate_stable(&p), Err(MmlError::TooLarge { n: 11, .. })));
    }

    #[test]
    fn outcome_ranks_follow_preference_lists() {
        let (v, p) = random_instance(6, 3);
        let da = deferred_acceptance(&p, Side::Men);
        let out = outcome_of(&da.matching, &v);
        for i in 0..6 {
            let j = da.matching.partner_of_man(i).unwrap();
            let pos = p.men()[i].iter().position(|&w| w == j).unwrap();
            assert_eq!(out.rank_men[i], pos + 1);
            assert_eq!(out.value_men[i], v.x()[[i, j]]);
        }
        for j in 0..6 {
            let i = da.matching.partner_of_woman(j).unwrap();
            let pos = p.women()[j].iter().position(|&m| m == i).unwrap();
            assert_eq!(out.rank_women[j], pos + 1);
        }
    }

    #[test]
    fn best_partner_has_rank_one() {
        let v = LatentValues::new(array![[0.5, 0.1], [0.3, 0.4]], array![[1.0, 2.0], [3.0, 4.0]], 0).unwrap();
        let mu = Matching::perfect(&[1, 0]).unwrap();
        let out = outcome_of(&mu, &v);
        assert_eq!(out.rank_men, vec![1, 1]);
    }

    #[test]
    fn swapped_partners_usually_block() {
        let bal = balance(&uniform_market(50, 50).unwrap()).unwrap();
        let mut unstable = 0;
        for t in 0..1000u64 {
            let v = sample_latent(&bal, t).unwrap();
            let p = prefs_from_latent(&v).unwrap();
            let mut partner: Vec<usize> = deferred_acceptance(&p, Side::Men)
                .matching
                .man_partners()
                .iter()
                .map(|o| o.unwrap())
                .collect();
            let (a, b) = ((t % 50) as usize, ((t * 7 + 1) % 50) as usize);
            let b = if a == b { (b + 1) % 50 } else { b };
            partner.swap(a, b);
            if !is_stable(&Matching::perfect(&partner).unwrap(), &v) {
                unstable += 1;
            }
        }
        assert!(unstable >= 990, "{unstable}");
    }

    #[test]
    fn truncation_floor_arithmetic() {
        let (v, p) = random_instance(10, 8);
        let mu = deferred_acceptance(&p, Side::Men).matching;
        let out = outcome_of(&mu, &v);
        let t = truncate_delta(&mu, &out, 0.2).unwrap();
        assert_eq!(t.partial.size(), 8);
        let worst_man = (0..10).max_by(|&a, &b| out.value_men[a].total_cmp(&out.value_men[b])).unwrap();
        let worst_woman = (0..10).max_by(|&a, &b| out.value_women[a].total_cmp(&out.value_women[b])).unwrap();
        assert_eq!(t.partial.partner_of_man(worst_man), None);
        assert_eq!(t.partial.partner_of_woman(worst_woman), None);
        assert!(is_stable(&t.partial, &v));
        assert_eq!(t.x_delta.iter().filter(|&&x| x > 0.0).count(), 8);
    }

    #[test]
    fn tiny_delta_is_identity() {
        let (v, p) = random_instance(10, 9);
        let mu = deferred_acceptance(&p, Side::Women).matching;
        let out = outcome_of(&mu, &v);
        let t = truncate_delta(&mu, &out, 0.05).unwrap();
        assert_eq!(t.x_delta, out.value_men);
        assert_eq!(t.y_delta, out.value_women);
    }

    #[test]
    fn truncation_rejects_bad_delta() {
        let (v, p) = random_instance(4, 1);
        let mu = deferred_acceptance(&p, Side::Men).matching;
        let out = outcome_of(&mu, &v);
        for d in [0.0, 1.0, -0.1, 1.5] {
            assert!(matches!(truncate_delta(&mu, &out, d), Err(MmlError::DeltaOutOfRange(_))));
        }
    }

    #[test]
    fn stable_matching_has_zero_alpha() {
        let (v, p) = random_instance(8, 2);
        let mu = deferred_acceptance(&p, Side::Men).matching;
        let cert = greedy_alpha_certificate(&mu, &v);
        assert_eq!(cert.alpha_upper, 0.0);
        assert!(is_alpha_stable_exact(&mu, &v, 0.0).unwrap());
    }

    #[test]
    fn single_blocking_pair_costs_one_pair() {
        // identity matching where only (man 2, woman 3) block
        let n = 5;
        let mut x = ndarray::Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.1 } else { 1.0 + j as f64 });
        let mut y = ndarray::Array2::from_shape_fn((n, n), |(j, i)| if i == j { 0.1 } else { 1.0 + i as f64 });
        x[[2, 3]] = 0.05;
        y[[3, 2]] = 0.05;
        let v = LatentValues::new(x, y, 0).unwrap();
        let mu = Matching::perfect(&[0, 1, 2, 3, 4]).unwrap();
        assert_eq!(find_blocking_pairs(&mu, &v), vec![BlockingPair { man: 2, woman: 3 }]);
        assert!((min_alpha_exact(&mu, &v).unwrap() - 0.2).abs() < 1e-12);
        assert!(is_alpha_stable_exact(&mu, &v, 0.2).unwrap());
        assert!(!is_alpha_stable_exact(&mu, &v, 0.19).unwrap());
        let cert = greedy_alpha_certificate(&mu, &v);
        assert!((cert.alpha_upper - 0.2).abs() < 1e-12);
        assert_eq!(cert.removed_men, vec![2]);
    }

    #[test]
    fn anything_is_one_stable() {
        let (v, _) = random_instance(6, 4);
        let mu = Matching::perfect(&[5, 4, 3, 2, 1, 0]).unwrap();
        assert!(is_alpha_stable_exact(&mu, &v, 0.999).unwrap());
    }

    #[test]
    fn exact_alpha_rejects_large() {
        let n = 13;
        let v = LatentValues::new(
            ndarray::Array2::from_shape_fn((n, n), |(i, j)| (i * n + j + 1) as f64),
            ndarray::Array2::from_shape_fn((n, n), |(i, j)| (i * n + j + 1) as f64),
            0,
        )
        .unwrap();
        let mu = Matching::perfect(&(0..n).collect::<Vec<_>>()).unwrap();
        assert!(matches!(is_alpha_stable_exact(&mu, &v, 0.1), Err(MmlError::TooLarge { .. })));
    }

    #[test]
    fn rectangular_da_leaves_women_single() {
        let x = array![[0.1, 0.2, 0.3]];
        let y = array![[1.0], [1.0], [1.0]];
        let v = LatentValues::new(x, y, 0).unwrap();
        let p = prefs_from_latent(&v).unwrap();
        let m = deferred_acceptance(&p, Side::Women).matching;
        assert_eq!(m.pairs(), vec![(0, 0)]);
        assert!(is_stable(&m, &v));
        // man 0 with woman 1 is blocked by the single woman 0
        let bad = Matching::from_pairs(1, 3, &[(0, 1)], Scope::Market).unwrap();
        assert_eq!(find_blocking_pairs(&bad, &v), vec![BlockingPair { man: 0, woman: 0 }]);
        // within its own support it is stable
        assert!(is_stable(&bad.with_scope(Scope::Support), &v));
    }
}
