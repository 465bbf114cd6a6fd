//! Property tests over randomly generated markets and samples.

use mml_core::market::contiguity_of;
use mml_core::matching::min_alpha_exact;
use mml_core::oracles::{ln_naive_p_upper, ln_p_mu, ln_q_xy, p_mu, q_xy};
use mml_core::stats::{dkw_bound, fit_inverse_mean};
use mml_core::{
    balance, best_fit_exponential, canonical_from_raw, deferred_acceptance, enumerate_stable,
    find_blocking_pairs, greedy_alpha_certificate, is_stable, ks_distance_to_exp, outcome_of,
    prefs_from_latent, public_scores_market, random_cbounded_market, sample_latent, sinkhorn_balance,
    truncate_delta, BalancedMarket, EmpiricalCdf, LatentValues, Matching, Side, StreamKey,
};
use ndarray::Array2;
use proptest::prelude::*;

fn market(n: usize, c: f64, seed: u64) -> BalancedMarket {
    balance(&random_cbounded_market(n, c, seed).unwrap()).unwrap()
}

fn instance(n: usize, c: f64, seed: u64) -> (BalancedMarket, LatentValues) {
    let bal = market(n, c, seed);
    let values = sample_latent(&bal, seed ^ 0x5eed).unwrap();
    (bal, values)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                prefix.push(j);
                go(prefix, used, out);
                prefix.pop();
                used[j] = false;
            }
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut vec![false; n], &mut out);
    out
}

/// Exponential samples drawn from a stream key.
fn exp_samples(n: usize, rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = StreamKey::new(seed).label("samples").rng();
    (0..n).map(|_| rng.exp(rate)).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn row_scaling_does_not_change_canonical_form(n in 2usize..7, seed in any::<u64>(), row in 0usize..7, s in 0.01f64..100.0) {
        let base = random_cbounded_market(n, 3.0, seed).unwrap();
        let mut a_raw = base.a_hat().clone();
        let b_raw = base.b_hat().clone();
        a_raw.row_mut(row % n).mapv_inplace(|v| v * s);
        let scaled = canonical_from_raw(&a_raw, &b_raw).unwrap();
        for (x, y) in scaled.a_hat().iter().zip(base.a_hat()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn balancing_invariants(n in 1usize..40, c in 1.0f64..4.0, seed in any::<u64>()) {
        let bal = market(n, c, seed);
        let m = bal.m();
        for i in 0..n {
            prop_assert!((m.row(i).sum() - 1.0).abs() <= bal.residual().max(1e-12) + 1e-12);
            prop_assert!((m.column(i).sum() - 1.0).abs() <= bal.residual().max(1e-12) + 1e-12);
            let phi_sum: f64 = bal.a().row(i).sum();
            prop_assert!((bal.phi()[i] - phi_sum).abs() <= 1e-10 * phi_sum.max(1.0));
            for j in 0..n {
                let mij = bal.a()[[i, j]] * bal.b()[[j, i]] / n as f64;
                prop_assert!((m[[i, j]] - mij).abs() <= 1e-12);
            }
        }
        let cb = bal.c_bound();
        for v in bal.a().iter().chain(bal.b().iter()).chain(m.mapv(|v| v * n as f64).iter()) {
            prop_assert!(*v >= 1.0 / cb - 1e-12 && *v <= cb + 1e-12);
        }
        prop_assert!((contiguity_of(bal.a(), bal.b(), m) - cb).abs() <= 1e-12 * cb);
    }

    #[test]
    fn balancing_is_idempotent(n in 2usize..20, seed in any::<u64>()) {
        let bal = market(n, 3.0, seed);
        let again = sinkhorn_balance(
            &canonical_from_raw(bal.a(), bal.b()).unwrap(),
            1e-10,
            10_000,
        )
        .unwrap();
        for (x, y) in again.m().iter().zip(bal.m()) {
            prop_assert!((x - y).abs() <= 1e-10);
        }
    }

    #[test]
    fn public_scores_closed_form(n in 2usize..30, seed in any::<u64>()) {
        let k = StreamKey::new(seed);
        let a: Vec<f64> = (0..n).map(|j| 0.1 + 5.0 * k.label("a").uniform(j as u64)).collect();
        let b: Vec<f64> = (0..n).map(|i| 0.1 + 5.0 * k.label("b").uniform(i as u64)).collect();
        let bal = balance(&public_scores_market(&a, &b).unwrap()).unwrap();
        for &m in bal.m().iter() {
            prop_assert!((m * n as f64 - 1.0).abs() <= 1e-9);
        }
        let prod: Vec<f64> = bal.phi().iter().zip(&b).map(|(p, bi)| p * bi).collect();
        for v in &prod {
            prop_assert!((v / prod[0] - 1.0).abs() <= 1e-8);
        }
    }

    #[test]
    fn da_is_lattice_extremal(n in 1usize..9, seed in any::<u64>()) {
        let (_, values) = instance(n, 3.0, seed);
        let prefs = prefs_from_latent(&values).unwrap();
        let mosm = deferred_acceptance(&prefs, Side::Men).matching;
        let wosm = deferred_acceptance(&prefs, Side::Women).matching;
        prop_assert!(find_blocking_pairs(&mosm, &values).is_empty());
        prop_assert!(find_blocking_pairs(&wosm, &values).is_empty());
        let best = outcome_of(&mosm, &values);
        for sigma in enumerate_stable(&prefs).unwrap() {
            let o = outcome_of(&sigma, &values);
            for i in 0..n {
                prop_assert!(best.value_men[i] <= o.value_men[i]);
                prop_assert!(best.value_women[i] >= o.value_women[i]);
            }
        }
    }

    #[test]
    fn enumeration_is_exactly_the_stable_set(n in 1usize..7, seed in any::<u64>()) {
        let (_, values) = instance(n, 2.0, seed);
        let listed = enumerate_stable(&prefs_from_latent(&values).unwrap()).unwrap();
        for p in permutations(n) {
            let mu = Matching::perfect(&p).unwrap();
            prop_assert_eq!(is_stable(&mu, &values), listed.contains(&mu));
        }
    }

    #[test]
    fn ranks_are_monotone_in_values(n in 2usize..30, seed in any::<u64>()) {
        let (_, values) = instance(n, 2.0, seed);
        let prefs = prefs_from_latent(&values).unwrap();
        let mu = deferred_acceptance(&prefs, Side::Men).matching;
        let o = outcome_of(&mu, &values);
        for i in 0..n {
            let j = mu.partner_of_man(i).unwrap();
            prop_assert_eq!(prefs.men()[i][o.rank_men[i] - 1], j);
            let better = values.x().row(i).iter().filter(|&&v| v < o.value_men[i]).count();
            prop_assert_eq!(o.rank_men[i], better + 1);
        }
    }

    #[test]
    fn truncation_size_and_ecdf_shift(n in 4usize..200, delta in 0.01f64..0.5, seed in any::<u64>()) {
        let (_, values) = instance(n, 2.0, seed);
        let prefs = prefs_from_latent(&values).unwrap();
        let mu = deferred_acceptance(&prefs, Side::Women).matching;
        let o = outcome_of(&mu, &values);
        let t = truncate_delta(&mu, &o, delta).unwrap();
        let removed = (delta * n as f64 + 1e-9).floor() as usize;
        prop_assert_eq!(t.partial.size(), n - removed);
        let full = EmpiricalCdf::new(&o.value_men).unwrap();
        let trunc = EmpiricalCdf::new(&t.x_delta).unwrap();
        // both ECDFs jump only at sample points, so checking there suffices
        for &s in full.sorted_samples().iter().chain(trunc.sorted_samples()) {
            prop_assert!((full.eval(s) - trunc.eval(s)).abs() <= delta + 1e-12);
        }
    }

    #[test]
    fn ecdf_perturbation_is_at_most_k_over_n(n in 1usize..300, k in 0usize..300, lambda in 0.1f64..10.0, seed in any::<u64>()) {
        let k = k % (n + 1);
        let base = exp_samples(n, 1.0, seed);
        let mut changed = base.clone();
        let noise = exp_samples(k, 0.05, seed.wrapping_add(1));
        changed[..k].copy_from_slice(&noise);
        let d0 = ks_distance_to_exp(&base, lambda).unwrap();
        let d1 = ks_distance_to_exp(&changed, lambda).unwrap();
        prop_assert!((d0 - d1).abs() <= k as f64 / n as f64 + 1e-12);
    }

    #[test]
    fn best_fit_dominates(n in 2usize..400, rate in 0.01f64..100.0, other in 0.01f64..100.0, seed in any::<u64>()) {
        let x = exp_samples(n, rate, seed);
        let best = best_fit_exponential(&x).unwrap();
        let inv_mean = fit_inverse_mean(&x).unwrap();
        let caller = ks_distance_to_exp(&x, other).unwrap();
        prop_assert!(best.ks_distance <= inv_mean.ks_distance.min(caller) + 1e-3);
    }

    #[test]
    fn dkw_bound_decreases(n in 1usize..1000, delta in 0.0f64..0.2, eps in 0.01f64..1.0) {
        let b = dkw_bound(n, delta, eps);
        prop_assert!(dkw_bound(n + 1, delta, eps) <= b);
        prop_assert!(dkw_bound(n, delta, eps * 1.1) <= b);
    }

    #[test]
    fn alpha_certificate_is_sound_and_dominates_exact(n in 2usize..7, swaps in 1usize..3, seed in any::<u64>()) {
        let (_, values) = instance(n, 2.0, seed);
        let prefs = prefs_from_latent(&values).unwrap();
        let mut p: Vec<usize> = deferred_acceptance(&prefs, Side::Men)
            .matching
            .man_partners()
            .iter()
            .map(|j| j.unwrap())
            .collect();
        let k = StreamKey::new(seed).label("swap");
        for s in 0..swaps as u64 {
            let i = (k.word(2 * s) % n as u64) as usize;
            let j = (k.word(2 * s + 1) % n as u64) as usize;
            p.swap(i, j);
        }
        let mu = Matching::perfect(&p).unwrap();
        let cert = greedy_alpha_certificate(&mu, &values);
        prop_assert!(is_stable(&cert.stable_part, &values));
        let exact = min_alpha_exact(&mu, &values).unwrap();
        prop_assert!(cert.alpha_upper >= exact - 1e-12);
        if find_blocking_pairs(&mu, &values).len() == 1 {
            prop_assert!((cert.alpha_upper - exact).abs() <= 1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    // p_mu against the naive bound, q and the first-order product
    #[test]
    fn likelihood_orderings(n in 1usize..7, c in 1.0f64..3.0, scale in 0.001f64..3.0, seed in any::<u64>()) {
        let (bal, _) = instance(n, c, seed);
        let k = StreamKey::new(seed).label("xy");
        let x: Vec<f64> = (0..n).map(|i| scale * -k.label("x").uniform(i as u64).ln()).collect();
        let y: Vec<f64> = (0..n).map(|j| scale * -k.label("y").uniform(j as u64).ln()).collect();
        let perm = &permutations(n)[(k.word(99) % (1..=n as u64).product::<u64>()) as usize];
        let mu = Matching::perfect(perm).unwrap();
        let (a, b, m) = (bal.a(), bal.b(), bal.m());
        let lp = ln_p_mu(&x, &y, a, b, &mu);
        let tol = 1e-12 * lp.abs().max(1.0);
        prop_assert!(ln_naive_p_upper(&x, &y, &mu, a, b, bal.c_bound()) >= lp - tol);
        let lq = ln_q_xy(&x, &y, m);
        prop_assert!(lp >= lq - tol);
        let first_order: Vec<f64> = (0..n)
            .flat_map(|i| (0..n).map(move |j| (i, j)))
            .map(|(i, j)| a[[i, j]] * b[[j, i]] * x[i] * y[j])
            .collect();
        if first_order.iter().all(|&t| t < 1.0) {
            let ln_prod: f64 = first_order.iter().map(|t| (-t).ln_1p()).sum();
            prop_assert!(lq >= ln_prod - tol);
        }
    }
}

#[test]
fn log_space_stays_finite() {
    // x^T M y up to 1e4 with n = 100
    let n = 100;
    let bal = market(n, 2.0, 11);
    let mu = Matching::perfect(&(0..n).collect::<Vec<_>>()).unwrap();
    for v in [1e-3, 1.0, 10.0] {
        let x = vec![v; n];
        let y = vec![v; n];
        let lq = ln_q_xy(&x, &y, bal.m());
        let lp = ln_p_mu(&x, &y, bal.a(), bal.b(), &mu);
        assert!(lq.is_finite() && lp.is_finite(), "v = {v}");
        assert!(q_xy(&x, &y, bal.m()).is_finite());
        assert!(!p_mu(&x, &y, bal.a(), bal.b(), &mu).is_nan());
    }
}

#[test]
fn ks_agrees_with_dense_grid() {
    for (seed, n, rate) in [(1u64, 10usize, 1.0), (2, 100, 3.0), (3, 1000, 0.5)] {
        let x = exp_samples(n, rate, seed);
        let lambda = 1.3 * rate;
        let exact = ks_distance_to_exp(&x, lambda).unwrap();
        let ecdf = EmpiricalCdf::new(&x).unwrap();
        let cdf = |t: f64| 1.0 - (-lambda * t).exp();
        let hi = ecdf.sorted_samples().last().unwrap() * 1.5;
        let mut sup: f64 = 0.0;
        for k in 0..=1_000_000 {
            let t = hi * k as f64 / 1e6;
            sup = sup.max((ecdf.eval(t) - cdf(t)).abs());
        }
        // the supremum is attained at a sample point or its left limit
        for (i, &s) in ecdf.sorted_samples().iter().enumerate() {
            sup = sup.max((ecdf.eval(s) - cdf(s)).abs());
            sup = sup.max((i as f64 / n as f64 - cdf(s)).abs());
        }
        assert!((exact - sup).abs() <= 1e-9, "n = {n}: {exact} vs {sup}");
    }
}

#[test]
fn zero_score_matrix_is_rejected_everywhere() {
    let mut a = Array2::ones((3, 3));
    a[[1, 2]] = 0.0;
    assert!(canonical_from_raw(&a, &Array2::ones((3, 3))).is_err());
}
