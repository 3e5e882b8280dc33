//! C ABI over `gap-core`.
//!
//! Objects are opaque heap handles created by `gap_*_new` (or returned
//! through an out-pointer) and released with the matching `gap_*_free`.
//! Every fallible call returns a [`GapStatus`]; on failure the message is
//! available from [`gap_last_error`] on the same thread until the next call.
//! Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use gap_core::eval::{attack_success_rate, PairRef, PairSelection};
use gap_core::oracle::{calibrate_threshold, RemoteOracle, RetryPolicy, SimilarityOracle, ThrottleConfig, ToyOracle};
use gap_core::patch::PatchFile;
use gap_core::synth::{build_corpus, Gallery, PhotoParams};
use gap_core::{run_greedy, GapError, OptimizerConfig, Patch, Placement};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GapStatus {
    Ok = 0,
    InvalidArgument = 1,
    NotFound = 2,
    /// The oracle failed: transport, protocol, rate limit or degenerate input.
    Oracle = 3,
    Io = 4,
    NullPointer = 5,
    Panic = 6,
}

impl From<&GapError> for GapStatus {
    fn from(e: &GapError) -> Self {
        match e {
            GapError::InvalidArgument(_) | GapError::Json(_) => GapStatus::InvalidArgument,
            GapError::NotFound(_) => GapStatus::NotFound,
            GapError::DegenerateEmbedding
            | GapError::Transport(_)
            | GapError::Protocol(_)
            | GapError::BudgetExceeded(_) => GapStatus::Oracle,
            GapError::Io(_) | GapError::Png(_) => GapStatus::Io,
        }
    }
}

/// Rendered synthetic corpus.
pub struct GapCorpus {
    gallery: Gallery,
}

/// Similarity oracle with its own query ledger.
pub struct GapOracle {
    inner: Box<dyn SimilarityOracle>,
}

/// Optimized (or loaded) patch with its placement.
pub struct GapPatch {
    patch: Patch,
    placement: Placement,
    best_loss: f64,
}

/// Search settings. Start from [`gap_optimize_params_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct GapOptimizeParams {
    pub n_iters: u32,
    pub batch_size: u32,
    pub restart_interval: u32,
    pub restarts_enabled: bool,
    pub symmetric: bool,
    pub seed: u64,
    pub identity: u32,
    pub photo_a: u32,
    pub photo_b: u32,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NULs were replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), GapError>>(f: F) -> GapStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => GapStatus::Ok,
        Ok(Err(e)) => {
            set_last_error(e.to_string());
            GapStatus::from(&e)
        }
        Err(_) => {
            set_last_error("internal panic".into());
            GapStatus::Panic
        }
    }
}

fn null(what: &str) -> GapError {
    GapError::InvalidArgument(format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, GapError> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| GapError::InvalidArgument(format!("{what} is not UTF-8")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) {
    *out = Box::into_raw(Box::new(value));
}

fn status_or_null<T>(p: *const T) -> Option<GapStatus> {
    if p.is_null() {
        set_last_error("null handle".into());
        Some(GapStatus::NullPointer)
    } else {
        None
    }
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next `gap_*` call on the same thread.
#[no_mangle]
pub extern "C" fn gap_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `out` must be a valid pointer to write a handle into.
#[no_mangle]
pub unsafe extern "C" fn gap_corpus_new(
    corpus_seed: u64,
    n_identities: u32,
    photos_per_identity: u32,
    out: *mut *mut GapCorpus,
) -> GapStatus {
    if let Some(s) = status_or_null(out) {
        return s;
    }
    guard(|| {
        let corpus = build_corpus(
            corpus_seed,
            n_identities as usize,
            photos_per_identity as usize,
            PhotoParams::default(),
        )?;
        put(out, GapCorpus { gallery: Gallery::from_corpus(&corpus) });
        Ok(())
    })
}

/// # Safety
/// `corpus` must be NULL or a handle from [`gap_corpus_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gap_corpus_free(corpus: *mut GapCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// In-process toy embedding oracle.
///
/// # Safety
/// `out` must be a valid pointer to write a handle into.
#[no_mangle]
pub unsafe extern "C" fn gap_oracle_toy_new(out: *mut *mut GapOracle) -> GapStatus {
    if let Some(s) = status_or_null(out) {
        return s;
    }
    guard(|| {
        put(out, GapOracle { inner: Box::new(ToyOracle::new()) });
        Ok(())
    })
}

/// HTTP oracle at `endpoint_url`, health-checked before returning.
/// `max_qps <= 0` disables throttling.
///
/// # Safety
/// `endpoint_url` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gap_oracle_remote_new(
    endpoint_url: *const c_char,
    max_qps: f64,
    out: *mut *mut GapOracle,
) -> GapStatus {
    if let Some(s) = status_or_null(out) {
        return s;
    }
    guard(|| {
        let url = str_arg(endpoint_url, "endpoint_url")?;
        let throttle = ThrottleConfig { max_qps: (max_qps > 0.0).then_some(max_qps), ..Default::default() };
        let oracle = RemoteOracle::connect(url, throttle, RetryPolicy::default())?;
        put(out, GapOracle { inner: Box::new(oracle) });
        Ok(())
    })
}

/// Total similarity queries charged so far; 0 for a NULL handle.
///
/// # Safety
/// `oracle` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gap_oracle_queries(oracle: *const GapOracle) -> u64 {
    oracle.as_ref().map_or(0, |o| o.inner.queries_used())
}

/// # Safety
/// `oracle` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gap_oracle_free(oracle: *mut GapOracle) {
    if !oracle.is_null() {
        drop(Box::from_raw(oracle));
    }
}

#[no_mangle]
pub extern "C" fn gap_optimize_params_default() -> GapOptimizeParams {
    let d = OptimizerConfig::default();
    let pair = PairRef::default();
    GapOptimizeParams {
        n_iters: d.n_iters as u32,
        batch_size: d.batch_size as u32,
        restart_interval: d.restart_interval as u32,
        restarts_enabled: d.restarts_enabled,
        symmetric: d.symmetric,
        seed: d.seed,
        identity: pair.identity as u32,
        photo_a: pair.photo_a as u32,
        photo_b: pair.photo_b as u32,
    }
}

/// Runs the greedy search on one pair of the corpus with the default
/// forehead placement. An oracle failure mid-run still yields no patch.
///
/// # Safety
/// `corpus`, `oracle` and `params` must be live; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gap_optimize(
    corpus: *const GapCorpus,
    oracle: *const GapOracle,
    params: *const GapOptimizeParams,
    out: *mut *mut GapPatch,
) -> GapStatus {
    if let Some(s) = status_or_null(corpus)
        .or_else(|| status_or_null(oracle))
        .or_else(|| status_or_null(params))
        .or_else(|| status_or_null(out))
    {
        return s;
    }
    guard(|| {
        let (corpus, oracle, p) = (&*corpus, &*oracle, *params);
        let config = OptimizerConfig {
            n_iters: p.n_iters as usize,
            batch_size: p.batch_size as usize,
            restart_interval: p.restart_interval as usize,
            restarts_enabled: p.restarts_enabled,
            symmetric: p.symmetric,
            seed: p.seed,
            ..Default::default()
        };
        let pair = PairRef { identity: p.identity as usize, photo_a: p.photo_a as usize, photo_b: p.photo_b as usize }
            .load(&corpus.gallery)?;
        let placement = Placement::default();
        let outcome = run_greedy(&config, &pair, &placement, oracle.inner.as_ref())?;
        if let Some(e) = outcome.error {
            return Err(e);
        }
        put(out, GapPatch { patch: outcome.best_patch, placement, best_loss: outcome.best_loss });
        Ok(())
    })
}

/// Patch width, height and channel count.
///
/// # Safety
/// `patch` must be live; the out-pointers valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn gap_patch_dims(
    patch: *const GapPatch,
    width: *mut usize,
    height: *mut usize,
    channels: *mut usize,
) -> GapStatus {
    let Some(p) = patch.as_ref() else {
        return status_or_null(patch).unwrap_or(GapStatus::NullPointer);
    };
    for (dst, v) in [(width, p.patch.width()), (height, p.patch.height()), (channels, p.patch.channels())] {
        if !dst.is_null() {
            *dst = v;
        }
    }
    GapStatus::Ok
}

/// Best loss reached by the search; `+inf` for loaded or empty runs.
///
/// # Safety
/// `patch` must be NULL or live.
#[no_mangle]
pub unsafe extern "C" fn gap_patch_best_loss(patch: *const GapPatch) -> f64 {
    patch.as_ref().map_or(f64::NAN, |p| p.best_loss)
}

/// Copies the row-major interleaved values (in `[-1, 1]`) into `buf`, which
/// must hold at least `width * height * channels` doubles.
///
/// # Safety
/// `buf` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn gap_patch_values(patch: *const GapPatch, buf: *mut f64, len: usize) -> GapStatus {
    if let Some(s) = status_or_null(patch).or_else(|| status_or_null(buf)) {
        return s;
    }
    guard(|| {
        let values = (*patch).patch.values();
        if len < values.len() {
            return Err(GapError::InvalidArgument(format!("buffer holds {len} values, need {}", values.len())));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        Ok(())
    })
}

/// # Safety
/// `patch` must be live and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gap_patch_save_json(patch: *const GapPatch, path: *const c_char) -> GapStatus {
    if let Some(s) = status_or_null(patch) {
        return s;
    }
    guard(|| {
        let p = &*patch;
        PatchFile::new(&p.patch, &p.placement).save(Path::new(str_arg(path, "path")?))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn gap_patch_load_json(path: *const c_char, out: *mut *mut GapPatch) -> GapStatus {
    if let Some(s) = status_or_null(out) {
        return s;
    }
    guard(|| {
        let (patch, placement) = PatchFile::load(Path::new(str_arg(path, "path")?))?.into_parts()?;
        placement.validate()?;
        put(out, GapPatch { patch, placement, best_loss: f64::INFINITY });
        Ok(())
    })
}

/// # Safety
/// `patch` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn gap_patch_free(patch: *mut GapPatch) {
    if !patch.is_null() {
        drop(Box::from_raw(patch));
    }
}

/// Calibrates a threshold at `target_far` from `n_impostor_pairs` sampled
/// with `calibration_seed`, then scores every genuine pair of the corpus
/// with the patch worn. Writes the success rate and the threshold used.
///
/// # Safety
/// Handles must be live; the out-pointers valid or NULL.
#[no_mangle]
pub unsafe extern "C" fn gap_attack_success_rate(
    corpus: *const GapCorpus,
    oracle: *const GapOracle,
    patch: *const GapPatch,
    target_far: f64,
    n_impostor_pairs: u32,
    calibration_seed: u64,
    asr: *mut f64,
    threshold: *mut f64,
) -> GapStatus {
    if let Some(s) = status_or_null(corpus).or_else(|| status_or_null(oracle)).or_else(|| status_or_null(patch)) {
        return s;
    }
    guard(|| {
        let (corpus, oracle, patch) = (&*corpus, &*oracle, &*patch);
        let oracle = oracle.inner.as_ref();
        let t = calibrate_threshold(&corpus.gallery, oracle, target_far, n_impostor_pairs as usize, calibration_seed)?;
        let report =
            attack_success_rate(&corpus.gallery, &patch.patch, &patch.placement, oracle, &t, &PairSelection::default())?;
        if !asr.is_null() {
            *asr = report.asr;
        }
        if !threshold.is_null() {
            *threshold = t.threshold;
        }
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_is_cleared_by_success() {
        let mut corpus = ptr::null_mut();
        unsafe {
            assert_eq!(gap_corpus_new(1, 1, 2, &mut corpus), GapStatus::InvalidArgument);
            assert!(!gap_last_error().is_null());
            assert_eq!(gap_corpus_new(1, 2, 2, &mut corpus), GapStatus::Ok);
            assert!(gap_last_error().is_null());
            gap_corpus_free(corpus);
        }
    }

    #[test]
    fn null_handles_are_rejected() {
        unsafe {
            assert_eq!(gap_oracle_toy_new(ptr::null_mut()), GapStatus::NullPointer);
            let params = gap_optimize_params_default();
            let mut out = ptr::null_mut();
            assert_eq!(gap_optimize(ptr::null(), ptr::null(), &params, &mut out), GapStatus::NullPointer);
            assert_eq!(gap_oracle_queries(ptr::null()), 0);
            assert!(gap_patch_best_loss(ptr::null()).is_nan());
            gap_patch_free(ptr::null_mut());
        }
    }

    #[test]
    fn status_mapping() {
        assert_eq!(GapStatus::from(&GapError::Transport("x".into())), GapStatus::Oracle);
        assert_eq!(GapStatus::from(&GapError::NotFound("x".into())), GapStatus::NotFound);
    }
}
