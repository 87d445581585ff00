//! C ABI over the `codedfl` experiment runner.
//!
//! Objects are opaque handles created and released by this library.
//! Every fallible call returns a [`CodedflStatus`]; on failure the message
//! is available from [`codedfl_last_error`] on the same thread. Panics
//! are caught at the boundary and reported as `CODEDFL_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use codedfl::harness::{self, ExperimentConfig, RunArtifact};

/// Result codes.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CodedflStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Runtime = 4,
    OutOfRange = 5,
    Panic = 6,
}

/// Opaque experiment configuration.
pub struct CodedflConfig {
    inner: ExperimentConfig,
}

/// Opaque finished run.
pub struct CodedflRun {
    inner: RunArtifact,
}

/// One trace row.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CodedflEpoch {
    pub epoch: usize,
    pub cumulative_seconds: f64,
    pub train_loss: f64,
    pub test_accuracy: f64,
    pub contributors: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: CodedflStatus, msg: impl Into<String>) -> CodedflStatus {
    set_error(msg.into());
    status
}

fn from_error(e: codedfl::Error) -> CodedflStatus {
    let status = match e {
        codedfl::Error::Config(_) => CodedflStatus::Config,
        _ => CodedflStatus::Runtime,
    };
    fail(status, e.to_string())
}

fn guard(f: impl FnOnce() -> CodedflStatus) -> CodedflStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(CodedflStatus::Panic, msg)
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, CodedflStatus> {
    if p.is_null() {
        return Err(fail(CodedflStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CodedflStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

macro_rules! arg {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, CodedflStatus> {
    p.as_ref()
        .ok_or_else(|| fail(CodedflStatus::NullPointer, format!("{name} is null")))
}

/// Message of the last failure on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn codedfl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn codedfl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates the default configuration.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn codedfl_config_default(out: *mut *mut CodedflConfig) -> CodedflStatus {
    guard(|| {
        if out.is_null() {
            return fail(CodedflStatus::NullPointer, "out is null");
        }
        *out = Box::into_raw(Box::new(CodedflConfig {
            inner: ExperimentConfig::default(),
        }));
        CodedflStatus::Ok
    })
}

/// Parses and validates a TOML configuration.
///
/// # Safety
/// `text` must be a nul-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn codedfl_config_from_toml(
    text: *const c_char,
    out: *mut *mut CodedflConfig,
) -> CodedflStatus {
    guard(|| {
        let text = arg!(str_arg(text, "text"));
        if out.is_null() {
            return fail(CodedflStatus::NullPointer, "out is null");
        }
        match ExperimentConfig::from_toml_str(text, &[]) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(CodedflConfig { inner }));
                CodedflStatus::Ok
            }
            Err(e) => fail(CodedflStatus::Config, e.to_string()),
        }
    })
}

/// Sets the dotted `key` to `value` (parsed as TOML, else a string).
/// The configuration is unchanged when validation fails.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` must be
/// nul-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn codedfl_config_set(
    cfg: *mut CodedflConfig,
    key: *const c_char,
    value: *const c_char,
) -> CodedflStatus {
    guard(|| {
        let key = arg!(str_arg(key, "key"));
        let value = arg!(str_arg(value, "value"));
        let Some(cfg) = cfg.as_mut() else {
            return fail(CodedflStatus::NullPointer, "cfg is null");
        };
        match cfg
            .inner
            .with_overrides(&[(key.to_string(), value.to_string())])
        {
            Ok(next) => {
                cfg.inner = next;
                CodedflStatus::Ok
            }
            Err(e) => fail(CodedflStatus::Config, e.to_string()),
        }
    })
}

/// Serializes the configuration as TOML. Release with
/// [`codedfl_string_free`].
///
/// # Safety
/// `cfg` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn codedfl_config_to_toml(
    cfg: *const CodedflConfig,
    out: *mut *mut c_char,
) -> CodedflStatus {
    guard(|| {
        let cfg = arg!(handle(cfg, "cfg"));
        if out.is_null() {
            return fail(CodedflStatus::NullPointer, "out is null");
        }
        let s = CString::new(cfg.inner.to_toml_string()).expect("TOML has no nul bytes");
        *out = s.into_raw();
        CodedflStatus::Ok
    })
}

/// Writes the 16-digit configuration hash and a nul into `buf`, which
/// must hold at least 17 bytes.
///
/// # Safety
/// `cfg` must come from this library and `buf` must have `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn codedfl_config_hash(
    cfg: *const CodedflConfig,
    buf: *mut c_char,
    len: usize,
) -> CodedflStatus {
    guard(|| {
        let cfg = arg!(handle(cfg, "cfg"));
        if buf.is_null() {
            return fail(CodedflStatus::NullPointer, "buf is null");
        }
        let h = cfg.inner.hash();
        if len < h.len() + 1 {
            return fail(
                CodedflStatus::OutOfRange,
                format!("buffer of {len} bytes is too small"),
            );
        }
        ptr::copy_nonoverlapping(h.as_ptr().cast(), buf, h.len());
        *buf.add(h.len()) = 0;
        CodedflStatus::Ok
    })
}

/// # Safety
/// `cfg` must come from this library or be null; it must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn codedfl_config_free(cfg: *mut CodedflConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Runs the experiment.
///
/// # Safety
/// `cfg` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn codedfl_run(
    cfg: *const CodedflConfig,
    out: *mut *mut CodedflRun,
) -> CodedflStatus {
    guard(|| {
        let cfg = arg!(handle(cfg, "cfg"));
        if out.is_null() {
            return fail(CodedflStatus::NullPointer, "out is null");
        }
        match harness::run(&cfg.inner) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(CodedflRun { inner }));
                CodedflStatus::Ok
            }
            Err(e) => from_error(e),
        }
    })
}

/// Number of trace rows; 0 for a null handle.
///
/// # Safety
/// `run` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn codedfl_run_len(run: *const CodedflRun) -> usize {
    run.as_ref().map_or(0, |r| r.inner.traces.len())
}

/// Copies trace row `index` into `out`.
///
/// # Safety
/// `run` must come from this library and `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn codedfl_run_epoch(
    run: *const CodedflRun,
    index: usize,
    out: *mut CodedflEpoch,
) -> CodedflStatus {
    guard(|| {
        let run = arg!(handle(run, "run"));
        if out.is_null() {
            return fail(CodedflStatus::NullPointer, "out is null");
        }
        let Some(t) = run.inner.traces.get(index) else {
            return fail(
                CodedflStatus::OutOfRange,
                format!("row {index} of {}", run.inner.traces.len()),
            );
        };
        *out = CodedflEpoch {
            epoch: t.epoch,
            cumulative_seconds: t.cumulative_seconds,
            train_loss: t.train_loss,
            test_accuracy: t.test_accuracy,
            contributors: t.contributors.len(),
        };
        CodedflStatus::Ok
    })
}

/// First cumulative time at which the test accuracy reaches `target`.
/// `*reached` is set to false, and `*seconds` left alone, if it never does.
///
/// # Safety
/// `run` must come from this library; `seconds` and `reached` must be
/// valid pointers.
#[no_mangle]
pub unsafe extern "C" fn codedfl_run_time_to_accuracy(
    run: *const CodedflRun,
    target: f64,
    seconds: *mut f64,
    reached: *mut bool,
) -> CodedflStatus {
    guard(|| {
        let run = arg!(handle(run, "run"));
        if seconds.is_null() || reached.is_null() {
            return fail(CodedflStatus::NullPointer, "output pointer is null");
        }
        match harness::time_to_accuracy(&run.inner.traces, target) {
            Some(s) => {
                *seconds = s;
                *reached = true;
            }
            None => *reached = false,
        }
        CodedflStatus::Ok
    })
}

/// Writes `trace.csv` and `summary.json` into `dir`.
///
/// # Safety
/// `run` must come from this library and `dir` must be a nul-terminated
/// string.
#[no_mangle]
pub unsafe extern "C" fn codedfl_run_write(
    run: *const CodedflRun,
    dir: *const c_char,
) -> CodedflStatus {
    guard(|| {
        let run = arg!(handle(run, "run"));
        let dir = arg!(str_arg(dir, "dir"));
        match harness::write_artifact(Path::new(dir), &run.inner) {
            Ok(()) => CodedflStatus::Ok,
            Err(e) => from_error(e),
        }
    })
}

/// # Safety
/// `run` must come from this library or be null; it must not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn codedfl_run_free(run: *mut CodedflRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Releases a string returned by this library.
///
/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn codedfl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
