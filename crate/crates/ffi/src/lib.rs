//! C interface to trained models and knowledge bases.
//!
//! Every function returns a [`TsaStatus`]. On failure the message is kept
//! per thread and can be read with [`tsa_last_error`]. Handles are opaque
//! and must be released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tsa_core::features::N_FEATURES;
use tsa_core::harness::{self, SchemeSpec};
use tsa_core::kbstore::{self, KnowledgeBase};
use tsa_core::vbpmkl::{TrainedModel, VbConfig};
use tsa_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Format = 3,
    Io = 4,
    Numerical = 5,
    Degenerate = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Opaque trained classifier.
pub struct TsaModel {
    inner: TrainedModel,
}

/// Opaque knowledge base.
pub struct TsaKb {
    inner: KnowledgeBase,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).expect("nul bytes removed"));
}

fn status_of(e: &Error) -> TsaStatus {
    match e {
        Error::InvalidArgument(_) | Error::SimplexViolation(_) => TsaStatus::InvalidArgument,
        Error::Format { .. } => TsaStatus::Format,
        Error::Io { .. } => TsaStatus::Io,
        Error::DegenerateLabels(_) | Error::KbDegenerate(_) => TsaStatus::Degenerate,
        Error::Scheme { source, .. } => status_of(source),
        _ if e.is_numerical() => TsaStatus::Numerical,
        _ => TsaStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (TsaStatus, String)>) -> TsaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            TsaStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            TsaStatus::Panic
        }
    }
}

fn core<T>(r: tsa_core::Result<T>) -> Result<T, (TsaStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (TsaStatus, String) {
    (TsaStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (TsaStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| (TsaStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

/// Message for the last failed call on this thread; empty after success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tsa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Number of features every sample carries.
#[no_mangle]
pub extern "C" fn tsa_num_features() -> usize {
    N_FEATURES
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tsa_model_load(path: *const c_char, out: *mut *mut TsaModel) -> TsaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = path_arg(path, "path")?;
        let inner = core(TrainedModel::load(path))?;
        *out = Box::into_raw(Box::new(TsaModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tsa_model_save(model: *const TsaModel, path: *const c_char) -> TsaStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let path = path_arg(path, "path")?;
        core(model.inner.save(path))
    })
}

/// # Safety
/// `model` must come from this library (or be null) and not be used again.
#[no_mangle]
pub unsafe extern "C" fn tsa_model_free(model: *mut TsaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tsa_model_num_classes(model: *const TsaModel, out: *mut usize) -> TsaStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = model.inner.n_classes();
        Ok(())
    })
}

/// Writes class probabilities (model class order) into `probs` and the
/// winning external label (+1 stable, −1 unstable) into `label`.
///
/// # Safety
/// `features` must point to `n_features` doubles and `probs` to
/// `probs_len` writable doubles; `label` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tsa_model_predict(
    model: *const TsaModel,
    features: *const f64,
    n_features: usize,
    probs: *mut f64,
    probs_len: usize,
    label: *mut i32,
) -> TsaStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| null("model"))?;
        if features.is_null() {
            return Err(null("features"));
        }
        let label = label.as_mut().ok_or_else(|| null("label"))?;
        let c = model.inner.n_classes();
        if probs_len < c {
            return Err((TsaStatus::BufferTooSmall, format!("probs needs {c} entries, got {probs_len}")));
        }
        if probs.is_null() {
            return Err(null("probs"));
        }
        let x = std::slice::from_raw_parts(features, n_features);
        let p = core(model.inner.predictive_distribution(x))?;
        std::slice::from_raw_parts_mut(probs, c).copy_from_slice(&p.probs);
        *label = p.label;
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn tsa_kb_load(path: *const c_char, out: *mut *mut TsaKb) -> TsaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let path = path_arg(path, "path")?;
        let inner = core(kbstore::load_kb(path))?;
        *out = Box::into_raw(Box::new(TsaKb { inner }));
        Ok(())
    })
}

/// # Safety
/// `kb` must come from this library (or be null) and not be used again.
#[no_mangle]
pub unsafe extern "C" fn tsa_kb_free(kb: *mut TsaKb) {
    if !kb.is_null() {
        drop(Box::from_raw(kb));
    }
}

/// # Safety
/// `kb` and `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tsa_kb_len(kb: *const TsaKb, out: *mut usize) -> TsaStatus {
    guard(|| {
        let kb = kb.as_ref().ok_or_else(|| null("kb"))?;
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        *out = kb.inner.len();
        Ok(())
    })
}

/// Copies sample `index` into `features` (`tsa_num_features()` doubles)
/// and its label (±1) into `label`.
///
/// # Safety
/// `features` must hold `features_len` writable doubles; the rest valid.
#[no_mangle]
pub unsafe extern "C" fn tsa_kb_sample(
    kb: *const TsaKb,
    index: usize,
    features: *mut f64,
    features_len: usize,
    label: *mut i32,
) -> TsaStatus {
    guard(|| {
        let kb = kb.as_ref().ok_or_else(|| null("kb"))?;
        let label = label.as_mut().ok_or_else(|| null("label"))?;
        if features.is_null() {
            return Err(null("features"));
        }
        if features_len < N_FEATURES {
            return Err((TsaStatus::BufferTooSmall, format!("features needs {N_FEATURES} entries")));
        }
        let s = kb.inner.samples.get(index).ok_or_else(|| {
            (TsaStatus::InvalidArgument, format!("index {index} out of range for {} samples", kb.inner.len()))
        })?;
        std::slice::from_raw_parts_mut(features, N_FEATURES).copy_from_slice(&s.to_array());
        *label = s.label as i32;
        Ok(())
    })
}

/// Trains on a seeded split of `kb` with default settings and reports the
/// held-out accuracy.
///
/// # Safety
/// `scheme` must be NUL-terminated; `out` and `accuracy` valid.
#[no_mangle]
pub unsafe extern "C" fn tsa_train(
    kb: *const TsaKb,
    scheme: *const c_char,
    n_train: usize,
    seed: u64,
    out: *mut *mut TsaModel,
    accuracy: *mut f64,
) -> TsaStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let kb = kb.as_ref().ok_or_else(|| null("kb"))?;
        let accuracy = accuracy.as_mut().ok_or_else(|| null("accuracy"))?;
        let scheme: SchemeSpec = core(path_arg(scheme, "scheme")?.parse())?;
        let split = core(kbstore::split(kb.inner.len(), n_train, seed))?;
        let (model, result) = core(harness::run_on(
            &kb.inner.subset(&split.train),
            &kb.inner.subset(&split.test),
            &scheme,
            &VbConfig::default(),
            seed,
        ))?;
        *accuracy = result.metrics.accuracy;
        *out = Box::into_raw(Box::new(TsaModel { inner: model }));
        Ok(())
    })
}
