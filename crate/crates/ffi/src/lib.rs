//! C interface to the enhancer.
//!
//! A model is an opaque `CdunetModel*` obtained from [`cdunet_model_load`]
//! or [`cdunet_model_init`] and released with [`cdunet_model_free`]. Every
//! call returns a [`CdunetStatus`]; on failure [`cdunet_last_error`] holds a
//! message for the calling thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use cdunet::model::{init_weights, load_weights, save_weights, Cdunet, EnhancementRequest, ModelConfig, ModelVariant};
use cdunet::signal::{MultiChannelWaveform, Waveform};
use cdunet::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CdunetStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    BadWeights = 4,
    Runtime = 5,
    Panic = 6,
}

/// Opaque model handle.
pub struct CdunetModel {
    net: Cdunet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: CdunetStatus, msg: impl Into<String>) -> CdunetStatus {
    set_error(msg.into());
    status
}

fn status_of(e: &Error) -> CdunetStatus {
    match e {
        Error::Io(_) | Error::Wav(_) => CdunetStatus::Io,
        Error::Weights(_) => CdunetStatus::BadWeights,
        Error::Config(_) | Error::Input(_) | Error::Dimension(_) | Error::Geometry(_) => CdunetStatus::InvalidArgument,
        _ => CdunetStatus::Runtime,
    }
}

fn guard(f: impl FnOnce() -> Result<(), CdunetStatus>) -> CdunetStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CdunetStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => fail(CdunetStatus::Panic, "internal panic"),
    }
}

fn lift<T>(r: cdunet::Result<T>) -> Result<T, CdunetStatus> {
    r.map_err(|e| fail(status_of(&e), e.to_string()))
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, CdunetStatus> {
    if p.is_null() {
        return Err(fail(CdunetStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CdunetStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next call on the same thread.
#[no_mangle]
pub extern "C" fn cdunet_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn cdunet_status_str(status: CdunetStatus) -> *const c_char {
    let s: &'static CStr = match status {
        CdunetStatus::Ok => c"ok",
        CdunetStatus::NullPointer => c"null pointer argument",
        CdunetStatus::InvalidArgument => c"invalid argument",
        CdunetStatus::Io => c"I/O error",
        CdunetStatus::BadWeights => c"malformed weights file",
        CdunetStatus::Runtime => c"runtime error",
        CdunetStatus::Panic => c"internal panic",
    };
    s.as_ptr()
}

fn emit(out: *mut *mut CdunetModel, net: Cdunet) -> Result<(), CdunetStatus> {
    unsafe { *out = Box::into_raw(Box::new(CdunetModel { net })) };
    Ok(())
}

/// Loads a weights file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdunet_model_load(path: *const c_char, out: *mut *mut CdunetModel) -> CdunetStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(CdunetStatus::NullPointer, "out is null"));
        }
        let path = str_arg(path, "path")?;
        let w = lift(load_weights(Path::new(path)))?;
        emit(out, lift(Cdunet::from_weights(w))?)
    })
}

/// Seeded untrained model of the named variant (`cdunet`, `unet_plain`,
/// `unet_ipd` or `unet_bf`).
///
/// # Safety
/// `variant` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdunet_model_init(
    variant: *const c_char,
    seed: u64,
    out: *mut *mut CdunetModel,
) -> CdunetStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(CdunetStatus::NullPointer, "out is null"));
        }
        let v: ModelVariant = lift(str_arg(variant, "variant")?.parse())?;
        let cfg = ModelConfig::for_variant(v);
        let w = lift(init_weights(&cfg, seed))?;
        emit(out, lift(Cdunet::new(cfg, w))?)
    })
}

/// Writes the model's weights to `path`.
///
/// # Safety
/// `model` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cdunet_model_save(model: *const CdunetModel, path: *const c_char) -> CdunetStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| fail(CdunetStatus::NullPointer, "model is null"))?;
        let path = str_arg(path, "path")?;
        lift(save_weights(m.net.weights(), Path::new(path)))
    })
}

/// # Safety
/// `model` must come from this library and not be used afterwards. Null is
/// ignored.
#[no_mangle]
pub unsafe extern "C" fn cdunet_model_free(model: *mut CdunetModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of trainable parameters.
///
/// # Safety
/// `model` must come from this library and `out` be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cdunet_model_param_count(model: *const CdunetModel, out: *mut usize) -> CdunetStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| fail(CdunetStatus::NullPointer, "model is null"))?;
        if out.is_null() {
            return Err(fail(CdunetStatus::NullPointer, "out is null"));
        }
        *out = m.net.weights().param_count();
        Ok(())
    })
}

/// Enhances the talker at `target_deg` from a two-channel recording of
/// `len` samples per channel. `out` receives `len` samples.
///
/// # Safety
/// `mic1`, `mic2` and `out` must each point to `len` floats.
#[no_mangle]
pub unsafe extern "C" fn cdunet_enhance(
    model: *const CdunetModel,
    mic1: *const f32,
    mic2: *const f32,
    len: usize,
    sample_rate: u32,
    target_deg: f64,
    width_deg: f64,
    out: *mut f32,
) -> CdunetStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| fail(CdunetStatus::NullPointer, "model is null"))?;
        if mic1.is_null() || mic2.is_null() || out.is_null() {
            return Err(fail(CdunetStatus::NullPointer, "audio buffer is null"));
        }
        if len == 0 {
            return Err(fail(CdunetStatus::InvalidArgument, "empty recording"));
        }
        let chan = |p: *const f32| {
            let s = std::slice::from_raw_parts(p, len);
            lift(Waveform::new(s.iter().map(|&v| f64::from(v)).collect(), sample_rate))
        };
        let mix = lift(MultiChannelWaveform::stereo(chan(mic1)?, chan(mic2)?))?;
        let req = lift(EnhancementRequest::new(mix, target_deg, width_deg))?;
        let y = lift(m.net.enhance(&req))?;
        let dst = std::slice::from_raw_parts_mut(out, len);
        for (d, s) in dst.iter_mut().zip(y.samples()) {
            *d = *s as f32;
        }
        Ok(())
    })
}
