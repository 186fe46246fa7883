//! C ABI for rbmlab.
//!
//! Matrices are opaque [`RbmMatrix`] handles created by the sampling or
//! decoding functions and released with [`rbm_matrix_free`]. Every fallible
//! function returns an [`RbmStatus`]; on failure the message is available from
//! [`rbm_last_error`] on the same thread. Panics never cross the boundary.
//!
//! Output buffers follow one convention: the caller passes a pointer and a
//! capacity, the callee writes the required length to `out_len` and returns
//! `RBM_STATUS_BUFFER_TOO_SMALL` if the capacity is insufficient.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use num_complex::Complex64;
use rbmlab::eigensolver::{spectrum_of, BandCounter};
use rbmlab::ensemble::{BandMatrix, BandMatrixParams};
use rbmlab::localization::greens_column;
use rbmlab::montecarlo::{run_experiment, ExperimentConfig};
use rbmlab::rng::derive_trial_seed;
use rbmlab::spectralstats::{semicircle_density, semicircle_measure};
use rbmlab::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbmStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A parameter violates a documented constraint.
    Config = 2,
    /// A numerical kernel failed.
    Numerical = 3,
    /// An estimator had no usable data.
    Insufficient = 4,
    Io = 5,
    /// Malformed binary matrix or JSON text.
    Decode = 6,
    /// The output buffer is too small; the required length was written.
    BufferTooSmall = 7,
    /// An internal panic was caught.
    Panic = 8,
}

/// Opaque band matrix handle.
pub struct RbmMatrix {
    inner: BandMatrix,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> RbmStatus {
    match e {
        Error::Config(_) => RbmStatus::Config,
        Error::Numerical { .. } | Error::Aborted(_) => RbmStatus::Numerical,
        Error::Insufficient(_) => RbmStatus::Insufficient,
        Error::Io { .. } => RbmStatus::Io,
        Error::Json(_) | Error::Decode(_) => RbmStatus::Decode,
    }
}

fn fail(status: RbmStatus, msg: impl Into<String>) -> RbmStatus {
    set_last_error(msg.into());
    status
}

/// Run `f`, translating errors and panics into status codes.
fn guard(f: impl FnOnce() -> Result<(), RbmStatusOr>) -> RbmStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RbmStatus::Ok,
        Ok(Err(RbmStatusOr::Core(e))) => fail(status_of(&e), e.to_string()),
        Ok(Err(RbmStatusOr::Status(s, msg))) => fail(s, msg),
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(RbmStatus::Panic, format!("panic: {msg}"))
        }
    }
}

enum RbmStatusOr {
    Core(Error),
    Status(RbmStatus, String),
}

impl From<Error> for RbmStatusOr {
    fn from(e: Error) -> Self {
        RbmStatusOr::Core(e)
    }
}

fn null(what: &str) -> RbmStatusOr {
    RbmStatusOr::Status(RbmStatus::NullArgument, format!("{what} is null"))
}

unsafe fn matrix_ref<'a>(m: *const RbmMatrix) -> Result<&'a BandMatrix, RbmStatusOr> {
    m.as_ref().map(|h| &h.inner).ok_or_else(|| null("matrix"))
}

unsafe fn copy_out<T: Copy>(
    src: &[T],
    buf: *mut T,
    cap: usize,
    out_len: *mut usize,
) -> Result<(), RbmStatusOr> {
    if !out_len.is_null() {
        *out_len = src.len();
    }
    if cap < src.len() {
        return Err(RbmStatusOr::Status(
            RbmStatus::BufferTooSmall,
            format!("buffer holds {cap} values, {} needed", src.len()),
        ));
    }
    if buf.is_null() {
        return if src.is_empty() {
            Ok(())
        } else {
            Err(null("buffer"))
        };
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

fn store_matrix(m: BandMatrix, out: *mut *mut RbmMatrix) {
    // SAFETY: callers check `out` for null first
    unsafe { *out = Box::into_raw(Box::new(RbmMatrix { inner: m })) };
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rbm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rbm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Sample a Gaussian band matrix of size `2 n_half + 1` with half band width
/// `floor(n_half^alpha)`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn rbm_matrix_sample(
    n_half: usize,
    alpha: f64,
    periodic: bool,
    seed: u64,
    out: *mut *mut RbmMatrix,
) -> RbmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = BandMatrixParams::from_exponent(n_half, alpha)?
            .with_periodic(periodic)
            .with_seed(seed);
        store_matrix(BandMatrix::sample(&params)?, out);
        Ok(())
    })
}

/// Like [`rbm_matrix_sample`] with an explicit half band width.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn rbm_matrix_sample_half_band(
    n_half: usize,
    half_band: usize,
    periodic: bool,
    seed: u64,
    out: *mut *mut RbmMatrix,
) -> RbmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let params = BandMatrixParams::from_half_band(n_half, half_band)?
            .with_periodic(periodic)
            .with_seed(seed);
        store_matrix(BandMatrix::sample(&params)?, out);
        Ok(())
    })
}

/// Decode the little-endian binary matrix layout.
///
/// # Safety
/// `bytes` must point to `len` readable bytes and `out` to writable storage.
#[no_mangle]
pub unsafe extern "C" fn rbm_matrix_from_bytes(
    bytes: *const u8,
    len: usize,
    out: *mut *mut RbmMatrix,
) -> RbmStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if bytes.is_null() {
            return Err(null("bytes"));
        }
        let data = std::slice::from_raw_parts(bytes, len);
        store_matrix(BandMatrix::from_bytes(data)?, out);
        Ok(())
    })
}

/// Encode a matrix in the binary layout.
///
/// # Safety
/// `m` must be a live handle; `buf` must hold `cap` bytes; `out_len` may be null.
#[no_mangle]
pub unsafe extern "C" fn rbm_matrix_to_bytes(
    m: *const RbmMatrix,
    buf: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> RbmStatus {
    guard(|| {
        let bytes = matrix_ref(m)?.to_bytes();
        copy_out(&bytes, buf, cap, out_len)
    })
}

/// Release a handle; null is ignored.
///
/// # Safety
/// `m` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rbm_matrix_free(m: *mut RbmMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Matrix dimension `2N+1`, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rbm_matrix_dimension(m: *const RbmMatrix) -> usize {
    m.as_ref().map_or(0, |h| h.inner.dimension())
}

/// Half band width `L`, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rbm_matrix_half_band(m: *const RbmMatrix) -> usize {
    m.as_ref().map_or(0, |h| h.inner.params.half_band)
}

/// Entry `H(i, j)` with row and column indices in `0..2N+1`.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rbm_matrix_entry(
    m: *const RbmMatrix,
    i: usize,
    j: usize,
    out: *mut f64,
) -> RbmStatus {
    guard(|| {
        let mat = matrix_ref(m)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let n = mat.dimension();
        if i >= n || j >= n {
            return Err(Error::config(format!("index ({i}, {j}) outside a {n} x {n} matrix")).into());
        }
        *out = mat.band().get(i, j);
        Ok(())
    })
}

/// All eigenvalues in increasing order.
///
/// # Safety
/// `m` must be a live handle; `buf` must hold `cap` doubles; `out_len` may be null.
#[no_mangle]
pub unsafe extern "C" fn rbm_matrix_eigenvalues(
    m: *const RbmMatrix,
    buf: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> RbmStatus {
    guard(|| {
        let mat = matrix_ref(m)?;
        if cap < mat.dimension() {
            // report the size without paying for the solve
            return copy_out(&vec![0.0; mat.dimension()], buf, cap, out_len);
        }
        let spec = spectrum_of(mat)?;
        copy_out(&spec.eigenvalues, buf, cap, out_len)
    })
}

/// Number of eigenvalues in `(a, b]`.
///
/// # Safety
/// `m` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rbm_matrix_count_in(
    m: *const RbmMatrix,
    a: f64,
    b: f64,
    out: *mut u64,
) -> RbmStatus {
    guard(|| {
        let mat = matrix_ref(m)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = BandCounter::new(mat.band()).count_in(a, b)?.count as u64;
        Ok(())
    })
}

/// Column `j` of the resolvent `(H - z)^{-1}`, `z = re + i im` with `im > 0`,
/// split into real and imaginary parts.
///
/// # Safety
/// `m` must be a live handle; `re_out` and `im_out` must hold `cap` doubles.
#[no_mangle]
pub unsafe extern "C" fn rbm_matrix_greens_column(
    m: *const RbmMatrix,
    j: usize,
    re: f64,
    im: f64,
    re_out: *mut f64,
    im_out: *mut f64,
    cap: usize,
    out_len: *mut usize,
) -> RbmStatus {
    guard(|| {
        let mat = matrix_ref(m)?;
        let n = mat.dimension();
        if j >= n {
            return Err(Error::config(format!("column {j} outside a matrix of dimension {n}")).into());
        }
        if cap < n {
            return copy_out(&vec![0.0; n], re_out, cap, out_len);
        }
        let g = greens_column(mat, j, Complex64::new(re, im))?;
        let re_v: Vec<f64> = g.iter().map(|c| c.re).collect();
        let im_v: Vec<f64> = g.iter().map(|c| c.im).collect();
        copy_out(&re_v, re_out, cap, out_len)?;
        copy_out(&im_v, im_out, cap, ptr::null_mut())
    })
}

/// Semicircle density `sqrt(4 - E^2) / (2 pi)` on `[-2, 2]`, zero outside.
#[no_mangle]
pub extern "C" fn rbm_semicircle_density(e: f64) -> f64 {
    semicircle_density(e)
}

/// Semicircle mass of `[a, b]`.
#[no_mangle]
pub extern "C" fn rbm_semicircle_measure(a: f64, b: f64) -> f64 {
    semicircle_measure(a, b)
}

/// Seed of trial `trial` at grid point `grid` under master seed `master`.
#[no_mangle]
pub extern "C" fn rbm_derive_trial_seed(master: u64, grid: u64, trial: u64) -> u64 {
    derive_trial_seed(master, grid, trial)
}

/// Run an experiment described by a JSON config; on success `*manifest_out`
/// receives the manifest JSON, to be released with [`rbm_string_free`].
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `manifest_out` writable.
#[no_mangle]
pub unsafe extern "C" fn rbm_run_experiment(
    config_json: *const c_char,
    manifest_out: *mut *mut c_char,
) -> RbmStatus {
    guard(|| {
        if config_json.is_null() {
            return Err(null("config_json"));
        }
        if manifest_out.is_null() {
            return Err(null("manifest_out"));
        }
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|e| RbmStatusOr::Status(RbmStatus::Decode, format!("config is not UTF-8: {e}")))?;
        let cfg = ExperimentConfig::from_json(text)?;
        let manifest = run_experiment(&cfg)?;
        let json = serde_json::to_string(&manifest).map_err(Error::from)?;
        *manifest_out = CString::new(json).expect("json has no NUL").into_raw();
        Ok(())
    })
}

/// Release a string returned by this library; null is ignored.
///
/// # Safety
/// `s` must be null or a string returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rbm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
