use std::ffi::{CStr, CString};
use std::ptr;

use msth_ffi::*;

fn last_error() -> String {
    let p = msth_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn take(s: *mut std::ffi::c_char) -> String {
    let out = unsafe { CStr::from_ptr(s) }.to_string_lossy().into_owned();
    unsafe { msth_string_free(s) };
    out
}

#[test]
fn config_lifecycle_and_run() {
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { msth_config_new(&mut cfg) }, MsthStatus::Ok);
    for (k, v) in [("dataset.n", "60"), ("train.epochs", "1"), ("name", "ffi")] {
        let (k, v) = (CString::new(k).unwrap(), CString::new(v).unwrap());
        assert_eq!(
            unsafe { msth_config_set(cfg, k.as_ptr(), v.as_ptr()) },
            MsthStatus::Ok
        );
    }
    let mut hash = ptr::null_mut();
    assert_eq!(unsafe { msth_config_hash(cfg, &mut hash) }, MsthStatus::Ok);
    assert_eq!(take(hash).len(), 64);

    let mut json = ptr::null_mut();
    assert_eq!(unsafe { msth_run(cfg, 0, &mut json) }, MsthStatus::Ok);
    let summary: serde_json::Value = serde_json::from_str(&take(json)).unwrap();
    assert_eq!(summary["name"], "ffi");

    let (k, v) = (
        CString::new("train.bogus").unwrap(),
        CString::new("1").unwrap(),
    );
    assert_eq!(
        unsafe { msth_config_set(cfg, k.as_ptr(), v.as_ptr()) },
        MsthStatus::Config
    );
    assert!(last_error().contains("bogus"));
    unsafe { msth_config_free(cfg) };
}

#[test]
fn text_config_round_trip() {
    let text = CString::new("dataset.n = 80\ntrain.lr = 0.02\n").unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(
        unsafe { msth_config_from_text(text.as_ptr(), &mut cfg) },
        MsthStatus::Ok
    );
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { msth_config_to_text(cfg, &mut out) },
        MsthStatus::Ok
    );
    assert!(take(out).contains("train.lr = 0.02"));
    unsafe { msth_config_free(cfg) };
}

#[test]
fn null_pointers_are_reported() {
    assert_eq!(
        unsafe { msth_config_new(ptr::null_mut()) },
        MsthStatus::NullPointer
    );
    assert!(last_error().contains("null"));
    let mut out = ptr::null_mut();
    assert_eq!(
        unsafe { msth_run(ptr::null(), 0, &mut out) },
        MsthStatus::NullPointer
    );
    unsafe {
        msth_config_free(ptr::null_mut());
        msth_string_free(ptr::null_mut());
    }
}

#[test]
fn regulator_functions() {
    let a = [5.0, 0.1, 0.1, 0.1];
    let mut fired = false;
    assert_eq!(
        unsafe { msth_detect_emergency(a.as_ptr(), 4, 100, 0, &mut fired) },
        MsthStatus::Ok
    );
    assert!(fired);
    assert_eq!(
        unsafe { msth_detect_emergency(ptr::null(), 0, 100, 0, &mut fired) },
        MsthStatus::Runtime
    );
    assert_eq!(last_error(), "empty-input");

    let mut out = [0.0; 3];
    assert_eq!(
        unsafe { msth_suppress([3.0, 1.0, -2.5].as_ptr(), 3, out.as_mut_ptr()) },
        MsthStatus::Ok
    );
    assert_eq!(out[1], 1.0);
    assert!((out[0] - 2.85).abs() < 1e-12);

    let mut c = [0.9];
    let cp = c.as_mut_ptr();
    assert_eq!(
        unsafe { msth_regulate_calcium(cp, 1, cp, &mut fired) },
        MsthStatus::Ok
    );
    assert!(fired && (c[0] - 0.86006).abs() < 1e-4);

    let mut score = 0.0;
    assert_eq!(
        unsafe { msth_realism_score([10, 35, 40, 15].as_ptr(), 1, &mut score) },
        MsthStatus::Ok
    );
    assert_eq!(score, 0.99);

    let mut lr = 0.0;
    assert_eq!(
        unsafe { msth_scaled_lr(0.001, 0.5, 0.5, &mut lr) },
        MsthStatus::Ok
    );
    assert!((lr - 0.00025).abs() < 1e-15);
    assert_eq!(
        unsafe { msth_scaled_lr(0.001, 1.5, 0.5, &mut lr) },
        MsthStatus::Runtime
    );
}
