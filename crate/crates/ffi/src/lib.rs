//! C ABI over `msth-core`.
//!
//! Every entry point returns an [`MsthStatus`]; results come back through
//! out-pointers. On a non-zero status `msth_last_error()` describes the
//! failure for the calling thread. Strings handed out by the library must be
//! released with `msth_string_free`, configs with `msth_config_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use msth::harness::{execute, run, ExperimentSpec};
use msth::health::{realism_score, scaled_lr};
use msth::regulators::{detect_emergency, regulate_calcium, suppress, RegulatorConfig};
use msth::MsthError;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MsthStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Data = 4,
    Runtime = 5,
    Panic = 6,
}

/// Opaque experiment configuration.
pub struct MsthConfig {
    spec: ExperimentSpec,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

struct Failure(MsthStatus, String);

impl From<MsthError> for Failure {
    fn from(e: MsthError) -> Self {
        let status = match e.exit_code() {
            2 => MsthStatus::Config,
            3 => MsthStatus::Data,
            _ => MsthStatus::Runtime,
        };
        Failure(status, e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MsthStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MsthStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            MsthStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        Err(Failure(MsthStatus::NullPointer, format!("{what} is null")))
    } else {
        Ok(())
    }
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    non_null(p, what)?;
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(MsthStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, n: usize, what: &str) -> Result<&'a [f64], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, n))
}

fn owned_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure(MsthStatus::Runtime, "string contains a NUL byte".into()))
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn msth_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn msth_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Default configuration.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn msth_config_new(out: *mut *mut MsthConfig) -> MsthStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = Box::into_raw(Box::new(MsthConfig {
            spec: ExperimentSpec::default(),
        }));
        Ok(())
    })
}

/// Configuration parsed from `key = value` lines.
///
/// # Safety
/// `text` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msth_config_from_text(
    text: *const c_char,
    out: *mut *mut MsthConfig,
) -> MsthStatus {
    guard(|| {
        non_null(out, "out")?;
        let spec = ExperimentSpec::from_text(c_str(text, "text")?)?;
        *out = Box::into_raw(Box::new(MsthConfig { spec }));
        Ok(())
    })
}

/// Set one configuration key, e.g. `train.lr` to `0.01`.
///
/// # Safety
/// `cfg` must come from this library; strings must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn msth_config_set(
    cfg: *mut MsthConfig,
    key: *const c_char,
    value: *const c_char,
) -> MsthStatus {
    guard(|| {
        non_null(cfg, "config")?;
        let (k, v) = (c_str(key, "key")?, c_str(value, "value")?);
        let mut spec = (*cfg).spec.clone();
        spec.set(k, v)?;
        (*cfg).spec = spec;
        Ok(())
    })
}

/// Resolved configuration as text; free with `msth_string_free`.
///
/// # Safety
/// `cfg` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msth_config_to_text(
    cfg: *const MsthConfig,
    out: *mut *mut c_char,
) -> MsthStatus {
    guard(|| {
        non_null(cfg, "config")?;
        non_null(out, "out")?;
        *out = owned_string((*cfg).spec.to_text())?;
        Ok(())
    })
}

/// SHA-256 hex digest of the resolved configuration; free with
/// `msth_string_free`.
///
/// # Safety
/// `cfg` must come from this library; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msth_config_hash(
    cfg: *const MsthConfig,
    out: *mut *mut c_char,
) -> MsthStatus {
    guard(|| {
        non_null(cfg, "config")?;
        non_null(out, "out")?;
        *out = owned_string((*cfg).spec.config_hash())?;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library and not be used afterwards. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn msth_config_free(cfg: *mut MsthConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Run the experiment and return its summary as JSON. With `write_files`
/// non-zero the usual output files are written to the configured directory.
///
/// # Safety
/// `cfg` must come from this library; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msth_run(
    cfg: *const MsthConfig,
    write_files: i32,
    out_json: *mut *mut c_char,
) -> MsthStatus {
    guard(|| {
        non_null(cfg, "config")?;
        non_null(out_json, "out_json")?;
        let spec = &(*cfg).spec;
        let out = if write_files != 0 {
            run(spec)?
        } else {
            execute(spec)?
        };
        let json = serde_json::to_string(&out.summary).map_err(MsthError::from)?;
        *out_json = owned_string(json)?;
        Ok(())
    })
}

/// # Safety
/// `s` must come from this library and not be used afterwards. NULL is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn msth_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Emergency predicate with the default thresholds.
///
/// # Safety
/// `a` must point to `n` readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msth_detect_emergency(
    a: *const f64,
    n: usize,
    steps_since_last_ultra: u64,
    consecutive_ultra: u32,
    out: *mut bool,
) -> MsthStatus {
    guard(|| {
        non_null(out, "out")?;
        let a = slice(a, n, "a")?;
        *out = detect_emergency(
            a,
            steps_since_last_ultra,
            consecutive_ultra,
            &RegulatorConfig::default(),
        )?;
        Ok(())
    })
}

/// Suppress overactive entries into `out` (may alias `a`).
///
/// # Safety
/// `a` must hold `n` readable values and `out` `n` writable ones.
#[no_mangle]
pub unsafe extern "C" fn msth_suppress(a: *const f64, n: usize, out: *mut f64) -> MsthStatus {
    guard(|| {
        if n > 0 {
            non_null(out, "out")?;
        }
        let result = suppress(slice(a, n, "a")?, &RegulatorConfig::default());
        ptr::copy(result.as_ptr(), out, result.len());
        Ok(())
    })
}

/// One calcium pump step into `out` (may alias `c`); `fired` reports
/// whether the pump acted.
///
/// # Safety
/// `c` must hold `n` readable values, `out` `n` writable ones, `fired` one.
#[no_mangle]
pub unsafe extern "C" fn msth_regulate_calcium(
    c: *const f64,
    n: usize,
    out: *mut f64,
    fired: *mut bool,
) -> MsthStatus {
    guard(|| {
        non_null(out, "out")?;
        non_null(fired, "fired")?;
        let (next, outcome) = regulate_calcium(slice(c, n, "c")?, &RegulatorConfig::default())?;
        ptr::copy(next.as_ptr(), out, next.len());
        *fired = outcome.fired;
        Ok(())
    })
}

/// Realism score of four intervention counts (ultra, fast, medium, slow).
///
/// # Safety
/// `counts` must point to four readable values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msth_realism_score(
    counts: *const u64,
    coordination_events: u64,
    out: *mut f64,
) -> MsthStatus {
    guard(|| {
        non_null(counts, "counts")?;
        non_null(out, "out")?;
        let c = std::slice::from_raw_parts(counts, 4);
        *out = realism_score([c[0], c[1], c[2], c[3]], coordination_events).score;
        Ok(())
    })
}

/// Health-scaled learning rate `base_lr * h_current * h_stability`.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn msth_scaled_lr(
    base_lr: f64,
    h_current: f64,
    h_stability: f64,
    out: *mut f64,
) -> MsthStatus {
    guard(|| {
        non_null(out, "out")?;
        *out = scaled_lr(base_lr, h_current, h_stability)?;
        Ok(())
    })
}
