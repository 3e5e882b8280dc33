use std::ffi::{CStr, CString};
use std::process::Command;
use std::ptr;

use gap_ffi::*;

#[test]
fn optimize_save_load_round_trip() {
    unsafe {
        let mut corpus = ptr::null_mut();
        let mut oracle = ptr::null_mut();
        assert_eq!(gap_corpus_new(1, 3, 2, &mut corpus), GapStatus::Ok);
        assert_eq!(gap_oracle_toy_new(&mut oracle), GapStatus::Ok);

        let params = GapOptimizeParams { n_iters: 10, seed: 4, ..gap_optimize_params_default() };
        let mut patch = ptr::null_mut();
        assert_eq!(gap_optimize(corpus, oracle, &params, &mut patch), GapStatus::Ok);
        assert_eq!(gap_oracle_queries(oracle), 10 * 8 * 4);
        assert!(gap_patch_best_loss(patch).is_finite());

        let (mut w, mut h, mut c) = (0, 0, 0);
        assert_eq!(gap_patch_dims(patch, &mut w, &mut h, &mut c), GapStatus::Ok);
        assert_eq!((w, h, c), (72, 28, 1));
        let mut values = vec![0.0; w * h * c];
        assert_eq!(gap_patch_values(patch, values.as_mut_ptr(), values.len() - 1), GapStatus::InvalidArgument);
        assert_eq!(gap_patch_values(patch, values.as_mut_ptr(), values.len()), GapStatus::Ok);
        assert!(values.iter().all(|v| (-1.0..=1.0).contains(v)));
        assert!(values.iter().any(|&v| v != 0.0));

        let dir = tempfile::tempdir().unwrap();
        let path = CString::new(dir.path().join("p.json").to_str().unwrap()).unwrap();
        assert_eq!(gap_patch_save_json(patch, path.as_ptr()), GapStatus::Ok);
        let mut loaded = ptr::null_mut();
        assert_eq!(gap_patch_load_json(path.as_ptr(), &mut loaded), GapStatus::Ok);
        let mut again = vec![0.0; values.len()];
        assert_eq!(gap_patch_values(loaded, again.as_mut_ptr(), again.len()), GapStatus::Ok);
        assert_eq!(values, again);

        let (mut asr, mut threshold) = (f64::NAN, f64::NAN);
        let status = gap_attack_success_rate(corpus, oracle, loaded, 1e-2, 100, 0, &mut asr, &mut threshold);
        assert_eq!(status, GapStatus::Ok);
        assert!((0.0..=1.0).contains(&asr) && threshold.is_finite());

        gap_patch_free(loaded);
        gap_patch_free(patch);
        gap_oracle_free(oracle);
        gap_corpus_free(corpus);
    }
}

#[test]
fn failures_carry_messages() {
    unsafe {
        let missing = CString::new("/nonexistent/patch.json").unwrap();
        let mut out = ptr::null_mut();
        assert_eq!(gap_patch_load_json(missing.as_ptr(), &mut out), GapStatus::NotFound);
        let msg = CStr::from_ptr(gap_last_error()).to_str().unwrap();
        assert!(msg.contains("/nonexistent/patch.json"), "{msg}");

        let url = CString::new("http://127.0.0.1:9").unwrap();
        let mut oracle = ptr::null_mut();
        assert_eq!(gap_oracle_remote_new(url.as_ptr(), 0.0, &mut oracle), GapStatus::Oracle);
        assert!(oracle.is_null());
    }
}

#[test]
fn header_declares_the_api_and_compiles() {
    let header = include_str!("../include/gap.h");
    for symbol in [
        "GapStatus",
        "GapCorpus",
        "GapOracle",
        "GapPatch",
        "GapOptimizeParams",
        "gap_last_error",
        "gap_corpus_new",
        "gap_corpus_free",
        "gap_oracle_toy_new",
        "gap_oracle_remote_new",
        "gap_oracle_queries",
        "gap_oracle_free",
        "gap_optimize_params_default",
        "gap_optimize",
        "gap_patch_dims",
        "gap_patch_values",
        "gap_patch_best_loss",
        "gap_patch_save_json",
        "gap_patch_load_json",
        "gap_patch_free",
        "gap_attack_success_rate",
    ] {
        assert!(header.contains(symbol), "gap.h lacks {symbol}");
    }
    // opaque: no field layout leaks for handle types
    assert!(header.contains("typedef struct GapPatch GapPatch;"));

    let Ok(status) = Command::new("cc")
        .args(["-fsyntax-only", "-Wall", "-Werror", "-x", "c", concat!(env!("CARGO_MANIFEST_DIR"), "/include/gap.h")])
        .status()
    else {
        eprintln!("no C compiler; skipping syntax check");
        return;
    };
    assert!(status.success());
}
