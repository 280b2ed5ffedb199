//! C ABI over `sla_grader`.
//!
//! Every fallible function returns an [`SlaStatus`]. On failure the
//! calling thread's last error message is set and can be read with
//! [`sla_last_error_message`]. Models are opaque [`SlaModel`] handles that
//! must be released with [`sla_model_free`]. Array arguments are
//! `(pointer, length)` pairs of binary64 values owned by the caller.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::slice;

use sla_grader::decode::{decode_hard, decode_soft, predict_response, DecodeMode};
use sla_grader::eval::{fit_calibration, pcc, rmse, src};
use sla_grader::model::{softmax, GraderModel, HeadKind};
use sla_grader::scale::GradeScale;
use sla_grader::storage::{load_model, save_model};
use sla_grader::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Dimension = 5,
    Domain = 6,
    UndefinedMetric = 7,
    DegenerateFit = 8,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlaDecodeMode {
    Hard = 0,
    Soft = 1,
    Reg = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SlaHead {
    Ce = 0,
    Fa = 1,
    Reg = 2,
}

/// Opaque grader model.
pub struct SlaModel {
    inner: GraderModel,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> SlaStatus {
    match err {
        Error::Io { .. } => SlaStatus::Io,
        Error::Format { .. } | Error::Parse { .. } | Error::Model { .. } => SlaStatus::Format,
        Error::Dimension { .. } => SlaStatus::Dimension,
        Error::UndefinedMetric(_) => SlaStatus::UndefinedMetric,
        Error::DegenerateFit(_) => SlaStatus::DegenerateFit,
        Error::Config(_) | Error::Usage(_) => SlaStatus::InvalidArgument,
        Error::Domain(_) => SlaStatus::Domain,
    }
}

struct Fail(SlaStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(SlaStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SlaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SlaStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            SlaStatus::Panic
        }
    }
}

unsafe fn in_slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn out_slice<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

unsafe fn out_value<'a, T>(ptr: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    ptr.as_mut().ok_or_else(|| null(what))
}

unsafe fn model_ref<'a>(model: *const SlaModel) -> Result<&'a GraderModel, Fail> {
    model.as_ref().map(|m| &m.inner).ok_or_else(|| null("model"))
}

unsafe fn path_arg(path: *const c_char) -> Result<PathBuf, Fail> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(PathBuf::from)
        .map_err(|_| Fail(SlaStatus::InvalidArgument, "path is not valid UTF-8".into()))
}

fn mode_of(mode: SlaDecodeMode) -> DecodeMode {
    match mode {
        SlaDecodeMode::Hard => DecodeMode::Hard,
        SlaDecodeMode::Soft => DecodeMode::Soft,
        SlaDecodeMode::Reg => DecodeMode::Reg,
    }
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<(), Fail> {
    if expected != actual {
        return Err(Error::Dimension { what, expected, actual }.into());
    }
    Ok(())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sla_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failure on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sla_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Reads a model file. On success `*out` owns a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a writable pointer.
#[no_mangle]
pub unsafe extern "C" fn sla_model_load(path: *const c_char, out: *mut *mut SlaModel) -> SlaStatus {
    guard(|| {
        let out = out_value(out, "out")?;
        *out = ptr::null_mut();
        let model = load_model(&path_arg(path)?)?;
        *out = Box::into_raw(Box::new(SlaModel { inner: model }));
        Ok(())
    })
}

/// Writes a model file.
///
/// # Safety
/// `model` must come from [`sla_model_load`]; `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn sla_model_save(model: *const SlaModel, path: *const c_char) -> SlaStatus {
    guard(|| {
        let m = model_ref(model)?;
        save_model(m, &path_arg(path)?)?;
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `model` must be null or a live handle, and must not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn sla_model_free(model: *mut SlaModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Feature dimension the model expects, or 0 for a null handle.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sla_model_input_dim(model: *const SlaModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.input_dim)
}

/// Width of the model's raw output: the class count, or 1 for regression.
///
/// # Safety
/// `model` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sla_model_output_dim(model: *const SlaModel) -> usize {
    model.as_ref().map_or(0, |m| m.inner.output.out_dim)
}

/// # Safety
/// `model` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn sla_model_head(model: *const SlaModel, out: *mut SlaHead) -> SlaStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out_value(out, "out")? = match m.head {
            HeadKind::Ce => SlaHead::Ce,
            HeadKind::Fa => SlaHead::Fa,
            HeadKind::Reg => SlaHead::Reg,
        };
        Ok(())
    })
}

/// Raw outputs (logits, or the regression value) for one feature vector.
///
/// # Safety
/// `x` must hold `x_len` values and `out` room for `out_len` values.
#[no_mangle]
pub unsafe extern "C" fn sla_model_forward(
    model: *const SlaModel,
    x: *const f64,
    x_len: usize,
    out: *mut f64,
    out_len: usize,
) -> SlaStatus {
    guard(|| {
        let m = model_ref(model)?;
        let x = in_slice(x, x_len, "x")?;
        let out = out_slice(out, out_len, "out")?;
        check_len("output buffer", m.output.out_dim, out.len())?;
        out.copy_from_slice(&m.forward(x)?);
        Ok(())
    })
}

/// Scores one response from its chunks, stored row-major as
/// `n_chunks * dim` values, and writes the mean chunk score.
///
/// # Safety
/// `chunks` must hold `n_chunks * dim` values and `out_score` be writable.
#[no_mangle]
pub unsafe extern "C" fn sla_model_predict(
    model: *const SlaModel,
    chunks: *const f64,
    n_chunks: usize,
    dim: usize,
    mode: SlaDecodeMode,
    out_score: *mut f64,
) -> SlaStatus {
    guard(|| {
        let m = model_ref(model)?;
        let total = n_chunks
            .checked_mul(dim)
            .ok_or_else(|| Fail(SlaStatus::InvalidArgument, "n_chunks * dim overflows".into()))?;
        let data = in_slice(chunks, total, "chunks")?;
        check_len("chunk dimension", m.input_dim, dim)?;
        let rows: Vec<&[f64]> = data.chunks_exact(dim.max(1)).collect();
        let out = out_value(out_score, "out_score")?;
        *out = predict_response(m, "ffi", 0, &rows, mode_of(mode))?.response_score;
        Ok(())
    })
}

/// Softmax of `n` logits into `out` (room for `n` values).
///
/// # Safety
/// `logits` and `out` must each hold `n` values.
#[no_mangle]
pub unsafe extern "C" fn sla_softmax(logits: *const f64, n: usize, out: *mut f64) -> SlaStatus {
    guard(|| {
        let z = in_slice(logits, n, "logits")?;
        let out = out_slice(out, n, "out")?;
        out.copy_from_slice(softmax(z)?.probs());
        Ok(())
    })
}

/// Decodes six class logits (A..F, scores 6..1) with hard or soft decoding.
///
/// # Safety
/// `logits` must hold `n` values and `out_score` be writable.
#[no_mangle]
pub unsafe extern "C" fn sla_decode_logits(
    logits: *const f64,
    n: usize,
    mode: SlaDecodeMode,
    out_score: *mut f64,
) -> SlaStatus {
    guard(|| {
        let scale = GradeScale::default();
        let z = in_slice(logits, n, "logits")?;
        check_len("logits", scale.num_classes(), z.len())?;
        let dist = softmax(z)?;
        let out = out_value(out_score, "out_score")?;
        *out = match mode {
            SlaDecodeMode::Hard => decode_hard(&dist, &scale),
            SlaDecodeMode::Soft => decode_soft(&dist, &scale),
            SlaDecodeMode::Reg => {
                return Err(Fail(SlaStatus::InvalidArgument, "logits decode with hard or soft mode".into()))
            }
        };
        Ok(())
    })
}

unsafe fn metric(
    preds: *const f64,
    refs: *const f64,
    n: usize,
    out: *mut f64,
    f: fn(&[f64], &[f64]) -> sla_grader::Result<f64>,
) -> SlaStatus {
    guard(|| {
        let p = in_slice(preds, n, "preds")?;
        let r = in_slice(refs, n, "refs")?;
        *out_value(out, "out")? = f(p, r)?;
        Ok(())
    })
}

/// # Safety
/// `preds` and `refs` must each hold `n` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn sla_rmse(preds: *const f64, refs: *const f64, n: usize, out: *mut f64) -> SlaStatus {
    metric(preds, refs, n, out, rmse)
}

/// # Safety
/// As [`sla_rmse`].
#[no_mangle]
pub unsafe extern "C" fn sla_pcc(preds: *const f64, refs: *const f64, n: usize, out: *mut f64) -> SlaStatus {
    metric(preds, refs, n, out, pcc)
}

/// # Safety
/// As [`sla_rmse`].
#[no_mangle]
pub unsafe extern "C" fn sla_src(preds: *const f64, refs: *const f64, n: usize, out: *mut f64) -> SlaStatus {
    metric(preds, refs, n, out, src)
}

/// Least-squares `refs ≈ slope * preds + intercept`.
///
/// # Safety
/// `preds` and `refs` must each hold `n` values; both outputs writable.
#[no_mangle]
pub unsafe extern "C" fn sla_calibration_fit(
    preds: *const f64,
    refs: *const f64,
    n: usize,
    out_slope: *mut f64,
    out_intercept: *mut f64,
) -> SlaStatus {
    guard(|| {
        let p = in_slice(preds, n, "preds")?;
        let r = in_slice(refs, n, "refs")?;
        let slope = out_value(out_slope, "out_slope")?;
        let intercept = out_value(out_intercept, "out_intercept")?;
        let fit = fit_calibration(p, r, "ffi")?;
        *slope = fit.slope;
        *intercept = fit.intercept;
        Ok(())
    })
}
