//! C ABI over `mml-core`.
//!
//! Objects cross the boundary as opaque handles created by `mml_market_*`
//! constructors or by an operation, and released with the matching
//! `mml_*_free`. Every fallible function returns an [`MmlStatus`]; on
//! failure [`mml_last_error_message`] describes the error. Matrices are
//! dense row-major `double` arrays. Indices are 0-based.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::slice;

use mml_core::io::read_market;
use mml_core::market::sinkhorn_balance;
use mml_core::{
    best_fit_exponential, canonical_from_raw, deferred_acceptance, enumerate_stable, is_stable,
    ks_distance_to_exp, prefs_from_latent, random_cbounded_market, sample_latent, uniform_market,
    BalancedMarket, CanonicalMarket, LatentValues, Matching, MmlError, Side,
};
use ndarray::Array2;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MmlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NonPositiveEntry = 3,
    ShapeMismatch = 4,
    NoConvergence = 5,
    TooLarge = 6,
    Parse = 7,
    Io = 8,
    DuplicateValue = 9,
    /// A Rust panic was caught at the boundary.
    Internal = 10,
}

/// Proposing side for deferred acceptance.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MmlSide {
    Men = 0,
    Women = 1,
}

/// A market in canonical (row-stochastic) form.
pub struct MmlMarket(CanonicalMarket);

/// A balanced square market.
pub struct MmlBalanced(BalancedMarket);

/// A latent-value draw `(X, Y)`.
pub struct MmlValues(LatentValues);

/// A possibly partial matching.
pub struct MmlMatching(Matching);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &MmlError) -> MmlStatus {
    match e {
        MmlError::NonPositiveEntry { .. } => MmlStatus::NonPositiveEntry,
        MmlError::ShapeMismatch(_) | MmlError::NonSquare { .. } => MmlStatus::ShapeMismatch,
        MmlError::NoConvergence { .. } => MmlStatus::NoConvergence,
        MmlError::TooLarge { .. } => MmlStatus::TooLarge,
        MmlError::Parse { .. } => MmlStatus::Parse,
        MmlError::Io(_) => MmlStatus::Io,
        MmlError::DuplicateValue { .. } => MmlStatus::DuplicateValue,
        _ => MmlStatus::InvalidArgument,
    }
}

enum Failure {
    Null(&'static str),
    Core(MmlError),
    Arg(String),
}

impl From<MmlError> for Failure {
    fn from(e: MmlError) -> Self {
        Failure::Core(e)
    }
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MmlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => MmlStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_error(&format!("null pointer passed for `{what}`"));
            MmlStatus::NullPointer
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(&e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Arg(msg))) => {
            set_error(&msg);
            MmlStatus::InvalidArgument
        }
        Err(_) => {
            set_error("internal panic");
            MmlStatus::Internal
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn input<'a>(p: *const f64, len: usize, what: &'static str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, needed: usize, what: &'static str) -> Result<&'a mut [f64], Failure> {
    if len < needed {
        return Err(Failure::Arg(format!("`{what}` holds {len} values, {needed} needed")));
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts_mut(p, needed))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread. The pointer stays valid
/// until the next failing call on the same thread. Empty if nothing failed.
#[no_mangle]
pub extern "C" fn mml_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a market from positive raw scores: `a_raw` is `n_men x n_women`,
/// `b_raw` is `n_women x n_men`. Rows are normalized.
///
/// # Safety
/// `a_raw` and `b_raw` must point to `n_men * n_women` doubles; `out` must
/// be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mml_market_from_raw(
    n_men: usize,
    n_women: usize,
    a_raw: *const f64,
    b_raw: *const f64,
    out_market: *mut *mut MmlMarket,
) -> MmlStatus {
    guard(|| {
        let slot = out(out_market, "out_market")?;
        let len = n_men * n_women;
        let a = Array2::from_shape_vec((n_men, n_women), input(a_raw, len, "a_raw")?.to_vec())
            .map_err(|e| Failure::Arg(e.to_string()))?;
        let b = Array2::from_shape_vec((n_women, n_men), input(b_raw, len, "b_raw")?.to_vec())
            .map_err(|e| Failure::Arg(e.to_string()))?;
        *slot = boxed(MmlMarket(canonical_from_raw(&a, &b)?));
        Ok(())
    })
}

/// The `n_men x n_women` market where every score is equal.
///
/// # Safety
/// `out_market` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mml_market_uniform(n_men: usize, n_women: usize, out_market: *mut *mut MmlMarket) -> MmlStatus {
    guard(|| {
        let slot = out(out_market, "out_market")?;
        *slot = boxed(MmlMarket(uniform_market(n_men, n_women)?));
        Ok(())
    })
}

/// Random square market with raw scores log-uniform on `[1/c, c]`.
///
/// # Safety
/// `out_market` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mml_market_random_cbounded(
    n: usize,
    c: f64,
    seed: u64,
    out_market: *mut *mut MmlMarket,
) -> MmlStatus {
    guard(|| {
        let slot = out(out_market, "out_market")?;
        *slot = boxed(MmlMarket(random_cbounded_market(n, c, seed)?));
        Ok(())
    })
}

/// Reads a market file in the text format written by the `mml` tools.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_market` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mml_market_read(path: *const c_char, out_market: *mut *mut MmlMarket) -> MmlStatus {
    guard(|| {
        let slot = out(out_market, "out_market")?;
        if path.is_null() {
            return Err(Failure::Null("path"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| Failure::Arg("path is not valid UTF-8".into()))?;
        *slot = boxed(MmlMarket(read_market(Path::new(path))?));
        Ok(())
    })
}

/// # Safety
/// `market` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mml_market_free(market: *mut MmlMarket) {
    free(market);
}

/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mml_market_dims(market: *const MmlMarket, n_men: *mut usize, n_women: *mut usize) -> MmlStatus {
    guard(|| {
        let m = &get(market, "market")?.0;
        *out(n_men, "n_men")? = m.n_men();
        *out(n_women, "n_women")? = m.n_women();
        Ok(())
    })
}

/// Sinkhorn balancing of a square market to `tol` within `max_iters`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mml_balance(
    market: *const MmlMarket,
    tol: f64,
    max_iters: usize,
    out_balanced: *mut *mut MmlBalanced,
) -> MmlStatus {
    guard(|| {
        let m = &get(market, "market")?.0;
        let slot = out(out_balanced, "out_balanced")?;
        *slot = boxed(MmlBalanced(sinkhorn_balance(m, tol, max_iters)?));
        Ok(())
    })
}

/// # Safety
/// `balanced` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mml_balanced_free(balanced: *mut MmlBalanced) {
    free(balanced);
}

/// Market size, or 0 for a null handle.
///
/// # Safety
/// `balanced` must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn mml_balanced_n(balanced: *const MmlBalanced) -> usize {
    balanced.as_ref().map_or(0, |b| b.0.n())
}

/// Contiguity constant `C` and the final Sinkhorn residual.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mml_balanced_stats(
    balanced: *const MmlBalanced,
    contiguity: *mut f64,
    residual: *mut f64,
) -> MmlStatus {
    guard(|| {
        let b = &get(balanced, "balanced")?.0;
        *out(contiguity, "contiguity")? = b.c_bound();
        *out(residual, "residual")? = b.residual();
        Ok(())
    })
}

/// Copies the men's fitness `phi` and women's fitness `psi` (length `n`
/// each) into the caller's buffers.
///
/// # Safety
/// `phi` and `psi` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mml_balanced_fitness(
    balanced: *const MmlBalanced,
    phi: *mut f64,
    psi: *mut f64,
    len: usize,
) -> MmlStatus {
    guard(|| {
        let b = &get(balanced, "balanced")?.0;
        let n = b.n();
        output(phi, len, n, "phi")?.copy_from_slice(&b.phi().to_vec());
        output(psi, len, n, "psi")?.copy_from_slice(&b.psi().to_vec());
        Ok(())
    })
}

/// Copies the bistochastic mutual matrix `M` (row-major, `n * n`).
///
/// # Safety
/// `m` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn mml_balanced_mutual(balanced: *const MmlBalanced, m: *mut f64, len: usize) -> MmlStatus {
    guard(|| {
        let b = &get(balanced, "balanced")?.0;
        let n = b.n();
        let dst = output(m, len, n * n, "m")?;
        for (d, s) in dst.iter_mut().zip(b.m().iter()) {
            *d = *s;
        }
        Ok(())
    })
}

/// Draws latent values `X_ij ~ Exp(A_ij)`, `Y_ji ~ Exp(B_ji)`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mml_sample_latent(
    balanced: *const MmlBalanced,
    seed: u64,
    out_values: *mut *mut MmlValues,
) -> MmlStatus {
    guard(|| {
        let b = &get(balanced, "balanced")?.0;
        let slot = out(out_values, "out_values")?;
        *slot = boxed(MmlValues(sample_latent(b, seed)?));
        Ok(())
    })
}

/// # Safety
/// `values` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mml_values_free(values: *mut MmlValues) {
    free(values);
}

/// Copies the men's values `X` (`n_men x n_women`) and the women's values
/// `Y` (`n_women x n_men`), row-major.
///
/// # Safety
/// `x` and `y` must hold `len` doubles each.
#[no_mangle]
pub unsafe extern "C" fn mml_values_copy(values: *const MmlValues, x: *mut f64, y: *mut f64, len: usize) -> MmlStatus {
    guard(|| {
        let v = &get(values, "values")?.0;
        let needed = v.n_men() * v.n_women();
        for (dst, src) in [(output(x, len, needed, "x")?, v.x()), (output(y, len, needed, "y")?, v.y())] {
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d = *s;
            }
        }
        Ok(())
    })
}

/// Deferred acceptance on the preferences induced by `values`. The number
/// of proposals is written to `proposals` when it is not null.
///
/// # Safety
/// `values` and `out_matching` must be valid; `proposals` may be null.
#[no_mangle]
pub unsafe extern "C" fn mml_deferred_acceptance(
    values: *const MmlValues,
    side: MmlSide,
    out_matching: *mut *mut MmlMatching,
    proposals: *mut u64,
) -> MmlStatus {
    guard(|| {
        let v = &get(values, "values")?.0;
        let slot = out(out_matching, "out_matching")?;
        let side = match side {
            MmlSide::Men => Side::Men,
            MmlSide::Women => Side::Women,
        };
        let da = deferred_acceptance(&prefs_from_latent(v)?, side);
        if let Some(p) = proposals.as_mut() {
            *p = da.proposals;
        }
        *slot = boxed(MmlMatching(da.matching));
        Ok(())
    })
}

/// A perfect matching of a square market: man `i` gets woman `partner[i]`.
///
/// # Safety
/// `partner` must hold `n` entries; `out_matching` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mml_matching_perfect(
    partner: *const usize,
    n: usize,
    out_matching: *mut *mut MmlMatching,
) -> MmlStatus {
    guard(|| {
        let slot = out(out_matching, "out_matching")?;
        let p: &[usize] = if n == 0 {
            &[]
        } else if partner.is_null() {
            return Err(Failure::Null("partner"));
        } else {
            slice::from_raw_parts(partner, n)
        };
        *slot = boxed(MmlMatching(Matching::perfect(p)?));
        Ok(())
    })
}

/// # Safety
/// `matching` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn mml_matching_free(matching: *mut MmlMatching) {
    free(matching);
}

/// Writes each man's partner, or -1 when unmatched, into `partner`.
///
/// # Safety
/// `partner` must hold `len` entries.
#[no_mangle]
pub unsafe extern "C" fn mml_matching_partners(matching: *const MmlMatching, partner: *mut i64, len: usize) -> MmlStatus {
    guard(|| {
        let m = &get(matching, "matching")?.0;
        let n = m.n_men();
        if len < n {
            return Err(Failure::Arg(format!("`partner` holds {len} values, {n} needed")));
        }
        if n > 0 && partner.is_null() {
            return Err(Failure::Null("partner"));
        }
        for (i, p) in m.man_partners().iter().enumerate() {
            *partner.add(i) = p.map_or(-1, |j| j as i64);
        }
        Ok(())
    })
}

/// Whether `matching` has no blocking pair under `values`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mml_is_stable(matching: *const MmlMatching, values: *const MmlValues, stable: *mut bool) -> MmlStatus {
    guard(|| {
        let m = &get(matching, "matching")?.0;
        let v = &get(values, "values")?.0;
        if m.n_men() != v.n_men() || m.n_women() != v.n_women() {
            return Err(MmlError::ShapeMismatch("matching and values differ in size".into()).into());
        }
        *out(stable, "stable")? = is_stable(m, v);
        Ok(())
    })
}

/// Number of stable matchings, by enumeration (at most 10 agents a side).
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn mml_count_stable(values: *const MmlValues, count: *mut usize) -> MmlStatus {
    guard(|| {
        let v = &get(values, "values")?.0;
        let slot = out(count, "count")?;
        *slot = enumerate_stable(&prefs_from_latent(v)?)?.len();
        Ok(())
    })
}

/// Sup distance between the empirical CDF of `samples` and `Exp(lambda)`.
///
/// # Safety
/// `samples` must hold `n` doubles; `distance` must be valid.
#[no_mangle]
pub unsafe extern "C" fn mml_ks_distance_to_exp(
    samples: *const f64,
    n: usize,
    lambda: f64,
    distance: *mut f64,
) -> MmlStatus {
    guard(|| {
        let x = input(samples, n, "samples")?;
        *out(distance, "distance")? = ks_distance_to_exp(x, lambda)?;
        Ok(())
    })
}

/// Rate minimizing the KS distance, and that distance.
///
/// # Safety
/// `samples` must hold `n` doubles; the outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn mml_best_fit_exponential(
    samples: *const f64,
    n: usize,
    lambda: *mut f64,
    distance: *mut f64,
) -> MmlStatus {
    guard(|| {
        let x = input(samples, n, "samples")?;
        let fit = best_fit_exponential(x)?;
        *out(lambda, "lambda")? = fit.lambda;
        *out(distance, "distance")? = fit.ks_distance;
        Ok(())
    })
}
