//! Simulation and analysis of large random two-sided matching markets with
//! logit preferences.
//!
//! The pipeline is: build a [`CanonicalMarket`] of row-stochastic scores,
//! [`balance`] it into a [`BalancedMarket`] with a bistochastic mutual
//! matrix, draw [`LatentValues`], compute stable matchings with
//! [`deferred_acceptance`] (or enumerate them for small markets), and
//! measure the outcome with the tools in [`stats`] and [`oracles`].

// Validation uses `!(x > 0.0)` style guards on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod experiment;
pub mod io;
pub mod market;
pub mod matching;
pub mod oracles;
pub mod rng;
pub mod sampling;
pub mod stats;

pub use error::{MmlError, Result};
pub use market::{
    backfill_imbalanced, balance, canonical_from_raw, contiguity_constant, public_scores_market,
    random_cbounded_market, sinkhorn_balance, uniform_market, BalancedMarket, CanonicalMarket,
};
pub use matching::{
    deferred_acceptance, enumerate_stable, find_blocking_pairs, greedy_alpha_certificate,
    is_alpha_stable_exact, is_stable, outcome_of, truncate_delta, BlockingPair, Matching,
    MatchingOutcome, Scope, Side,
};
pub use rng::StreamKey;
pub use sampling::{
    logit_sample_prefs, prefs_from_latent, sample_latent, LatentValues, PreferenceProfile,
};
pub use stats::{best_fit_exponential, ks_distance_to_exp, EmpiricalCdf, ExponentialFit};
