//! C interface to ghostkit.
//!
//! Every function returns a [`GkStatus`]. On failure the message is kept per
//! thread and read with [`gk_last_error`]. Handles are opaque and owned by the
//! caller, who releases them with the matching `*_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ghostkit::forward::{generate_patterns, measure, PatternKind};
use ghostkit::harness::{run_method, BuiltinTarget, MethodConfig};
use ghostkit::io::{load_bundle, save_bundle};
use ghostkit::{metrics, normalize_image, BucketSignal, Error, Image2D, PatternStack, Rng};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    UnsupportedSize = 4,
    Config = 5,
    Numerical = 6,
    Io = 7,
    Format = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GkPatternKind {
    /// `param` is the on-probability.
    Bernoulli = 0,
    /// `param` is the correlation length in pixels.
    Speckle = 1,
    /// `param` is ignored.
    Hadamard = 2,
}

pub struct GkImage(Image2D);
pub struct GkPatterns(PatternStack);
pub struct GkSignal(BucketSignal);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> GkStatus {
    match e {
        Error::Shape(_) => GkStatus::Shape,
        Error::UnsupportedSize(_) => GkStatus::UnsupportedSize,
        Error::Config(_) | Error::Spec(_) | Error::Replay(_) => GkStatus::Config,
        Error::NumericalFailure { .. } => GkStatus::Numerical,
        Error::Io(_) => GkStatus::Io,
        Error::Format(_) | Error::Json(_) | Error::Csv(_) | Error::Image(_) => GkStatus::Format,
        _ => GkStatus::InvalidArgument,
    }
}

struct Fail(GkStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn fail<T>(status: GkStatus, msg: impl Into<String>) -> Result<T, Fail> {
    Err(Fail(status, msg.into()))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> GkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            GkStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            set_error(format!("panic: {}", msg.unwrap_or_default()));
            GkStatus::Panic
        }
    }
}

unsafe fn get<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| Fail(GkStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out<T>(p: *mut *mut T, value: T) -> Result<(), Fail> {
    if p.is_null() {
        return fail(GkStatus::NullPointer, "output pointer is null");
    }
    *p = Box::into_raw(Box::new(value));
    Ok(())
}

unsafe fn slice<'a>(data: *const f64, len: usize) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if data.is_null() {
        return fail(GkStatus::NullPointer, "data is null");
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn string<'a>(s: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if s.is_null() {
        return fail(GkStatus::NullPointer, format!("{what} is null"));
    }
    CStr::from_ptr(s).to_str().map_err(|_| Fail(GkStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn copy_out(src: &[f64], dst: *mut f64, len: usize) -> Result<(), Fail> {
    if len < src.len() {
        return fail(GkStatus::BufferTooSmall, format!("need {} values, buffer holds {len}", src.len()));
    }
    if dst.is_null() {
        return fail(GkStatus::NullPointer, "output buffer is null");
    }
    ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library from the same thread.
#[no_mangle]
pub extern "C" fn gk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn gk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Image from `width * height` row-major values.
///
/// # Safety
/// `data` must point to `width * height` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn gk_image_new(
    width: usize,
    height: usize,
    data: *const f64,
    image: *mut *mut GkImage,
) -> GkStatus {
    guard(|| {
        let n = width.checked_mul(height).ok_or_else(|| Fail(GkStatus::InvalidArgument, "size overflows".into()))?;
        let img = Image2D::new(width, height, slice(data, n)?.to_vec())?;
        out(image, GkImage(img))
    })
}

/// Builtin target: a single letter, `bars` or `photo`.
///
/// # Safety
/// `name` must be a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn gk_image_builtin(
    name: *const c_char,
    width: usize,
    height: usize,
    image: *mut *mut GkImage,
) -> GkStatus {
    guard(|| {
        let name = string(name, "name")?;
        let target = match name.to_ascii_lowercase().as_str() {
            "bars" => BuiltinTarget::Bars,
            "photo" => BuiltinTarget::Photo,
            _ if name.chars().count() == 1 => BuiltinTarget::Letter { glyph: name.chars().next().expect("one char") },
            _ => return fail(GkStatus::InvalidArgument, format!("unknown target {name:?}")),
        };
        out(image, GkImage(target.render(width, height)?))
    })
}

/// # Safety
/// `image` must be a live handle and the outputs writable.
#[no_mangle]
pub unsafe extern "C" fn gk_image_dims(image: *const GkImage, width: *mut usize, height: *mut usize) -> GkStatus {
    guard(|| {
        let img = &get(image, "image")?.0;
        if width.is_null() || height.is_null() {
            return fail(GkStatus::NullPointer, "output pointer is null");
        }
        *width = img.width();
        *height = img.height();
        Ok(())
    })
}

/// Copies the pixels into `data`, which holds `len` doubles.
///
/// # Safety
/// `image` must be a live handle and `data` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gk_image_read(image: *const GkImage, data: *mut f64, len: usize) -> GkStatus {
    guard(|| copy_out(get(image, "image")?.0.data(), data, len))
}

/// # Safety
/// `image` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gk_image_free(image: *mut GkImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Seeded pattern stack of `count` patterns.
///
/// # Safety
/// `patterns` must be writable.
#[no_mangle]
pub unsafe extern "C" fn gk_patterns_generate(
    kind: GkPatternKind,
    param: f64,
    count: usize,
    width: usize,
    height: usize,
    seed: u64,
    patterns: *mut *mut GkPatterns,
) -> GkStatus {
    guard(|| {
        let kind = match kind {
            GkPatternKind::Bernoulli => PatternKind::BernoulliBinary { p: param },
            GkPatternKind::Speckle => PatternKind::GaussianSpeckle { correlation_length: param },
            GkPatternKind::Hadamard => PatternKind::HadamardPermuted,
        };
        let stack = generate_patterns(kind, count, width, height, &mut Rng::new(seed))?;
        out(patterns, GkPatterns(stack))
    })
}

/// # Safety
/// `patterns` must be a live handle and `count` writable.
#[no_mangle]
pub unsafe extern "C" fn gk_patterns_count(patterns: *const GkPatterns, count: *mut usize) -> GkStatus {
    guard(|| {
        let p = get(patterns, "patterns")?;
        if count.is_null() {
            return fail(GkStatus::NullPointer, "output pointer is null");
        }
        *count = p.0.count();
        Ok(())
    })
}

/// # Safety
/// `patterns` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gk_patterns_free(patterns: *mut GkPatterns) {
    if !patterns.is_null() {
        drop(Box::from_raw(patterns));
    }
}

/// Bucket signal from `len` values.
///
/// # Safety
/// `values` must point to `len` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn gk_signal_new(values: *const f64, len: usize, signal: *mut *mut GkSignal) -> GkStatus {
    guard(|| out(signal, GkSignal(BucketSignal::new(slice(values, len)?.to_vec(), None)?)))
}

/// Noiseless bucket values of `image` under `patterns`.
///
/// # Safety
/// Handles must be live and `signal` writable.
#[no_mangle]
pub unsafe extern "C" fn gk_measure(
    image: *const GkImage,
    patterns: *const GkPatterns,
    signal: *mut *mut GkSignal,
) -> GkStatus {
    guard(|| {
        let s = measure(&get(image, "image")?.0, &get(patterns, "patterns")?.0)?;
        out(signal, GkSignal(s))
    })
}

/// # Safety
/// `signal` must be a live handle and `len` writable.
#[no_mangle]
pub unsafe extern "C" fn gk_signal_len(signal: *const GkSignal, len: *mut usize) -> GkStatus {
    guard(|| {
        let s = get(signal, "signal")?;
        if len.is_null() {
            return fail(GkStatus::NullPointer, "output pointer is null");
        }
        *len = s.0.len();
        Ok(())
    })
}

/// # Safety
/// `signal` must be a live handle and `values` writable for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn gk_signal_read(signal: *const GkSignal, values: *mut f64, len: usize) -> GkStatus {
    guard(|| copy_out(get(signal, "signal")?.0.values(), values, len))
}

/// # Safety
/// `signal` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn gk_signal_free(signal: *mut GkSignal) {
    if !signal.is_null() {
        drop(Box::from_raw(signal));
    }
}

/// Reconstructs an image, normalized to [0,1]. `method` is a method name
/// (GI, DGI, GICS, CNN, UNET, GILM) or a JSON method object.
///
/// # Safety
/// Handles must be live, `method` nul-terminated and `image` writable.
#[no_mangle]
pub unsafe extern "C" fn gk_reconstruct(
    patterns: *const GkPatterns,
    signal: *const GkSignal,
    method: *const c_char,
    seed: u64,
    image: *mut *mut GkImage,
) -> GkStatus {
    guard(|| {
        let text = string(method, "method")?;
        let cfg = if text.trim_start().starts_with('{') {
            serde_json::from_str::<MethodConfig>(text).map_err(|e| Fail(GkStatus::Config, e.to_string()))?
        } else {
            MethodConfig::from_name(text)?
        };
        cfg.validate()?;
        let r = run_method(&cfg, &get(patterns, "patterns")?.0, &get(signal, "signal")?.0, seed, None)?;
        out(image, GkImage(normalize_image(&r.image)?))
    })
}

/// PSNR in dB with peak 1; identical images give +infinity.
///
/// # Safety
/// Handles must be live and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn gk_psnr(image: *const GkImage, reference: *const GkImage, value: *mut f64) -> GkStatus {
    guard(|| {
        let v = metrics::psnr(&get(image, "image")?.0, &get(reference, "reference")?.0)?;
        if value.is_null() {
            return fail(GkStatus::NullPointer, "output pointer is null");
        }
        *value = v;
        Ok(())
    })
}

/// Mean windowed SSIM.
///
/// # Safety
/// Handles must be live and `value` writable.
#[no_mangle]
pub unsafe extern "C" fn gk_ssim(image: *const GkImage, reference: *const GkImage, value: *mut f64) -> GkStatus {
    guard(|| {
        let v = metrics::ssim(&get(image, "image")?.0, &get(reference, "reference")?.0)?;
        if value.is_null() {
            return fail(GkStatus::NullPointer, "output pointer is null");
        }
        *value = v;
        Ok(())
    })
}

/// Display string for M / (width * height), nul-terminated into `buf`.
///
/// # Safety
/// `buf` must be writable for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn gk_format_sampling_rate(
    measurements: usize,
    width: usize,
    height: usize,
    buf: *mut c_char,
    len: usize,
) -> GkStatus {
    guard(|| {
        let s = ghostkit::format_sampling_rate(measurements, width, height)?;
        if len < s.len() + 1 {
            return fail(GkStatus::BufferTooSmall, format!("need {} bytes", s.len() + 1));
        }
        if buf.is_null() {
            return fail(GkStatus::NullPointer, "output buffer is null");
        }
        ptr::copy_nonoverlapping(s.as_ptr().cast(), buf, s.len());
        *buf.add(s.len()) = 0;
        Ok(())
    })
}

/// Writes a replay bundle directory.
///
/// # Safety
/// Handles must be live and `dir` nul-terminated.
#[no_mangle]
pub unsafe extern "C" fn gk_bundle_save(
    dir: *const c_char,
    patterns: *const GkPatterns,
    signal: *const GkSignal,
) -> GkStatus {
    guard(|| {
        let dir = string(dir, "dir")?;
        save_bundle(dir, &get(patterns, "patterns")?.0, &get(signal, "signal")?.0, Some("ffi".into()), None)?;
        Ok(())
    })
}

/// Reads a replay bundle directory.
///
/// # Safety
/// `dir` must be nul-terminated and the outputs writable.
#[no_mangle]
pub unsafe extern "C" fn gk_bundle_load(
    dir: *const c_char,
    patterns: *mut *mut GkPatterns,
    signal: *mut *mut GkSignal,
) -> GkStatus {
    guard(|| {
        if patterns.is_null() || signal.is_null() {
            return fail(GkStatus::NullPointer, "output pointer is null");
        }
        let b = load_bundle(string(dir, "dir")?)?;
        out(patterns, GkPatterns(b.patterns))?;
        out(signal, GkSignal(b.signal))
    })
}
