//! C ABI for the `dagw` estimator.
//!
//! Matrices cross the boundary as row-major `double` buffers. Estimates are
//! returned behind an opaque handle that the caller releases with
//! [`dagw_estimate_free`]. Every entry point returns a [`DagwStatus`]; the
//! message for the most recent failure on the calling thread is available from
//! [`dagw_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use dagw::ensemble::{estimate, EnsembleConfig, EnsembleEstimate, Variant};
use dagw::linalg::{mcd, Matrix, SymMatrix};
use dagw::simbench::{losses, true_dag};
use dagw::Error;

/// Result code of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DagwStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    NotPositiveDefinite = 3,
    Numerical = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Estimator variant.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DagwVariant {
    DagwBic = 0,
    Dagw = 1,
    Mle = 2,
    Bayes = 3,
}

impl From<DagwVariant> for Variant {
    fn from(v: DagwVariant) -> Self {
        match v {
            DagwVariant::DagwBic => Variant::DagwBic,
            DagwVariant::Dagw => Variant::Dagw,
            DagwVariant::Mle => Variant::Mle,
            DagwVariant::Bayes => Variant::Bayes,
        }
    }
}

/// Opaque estimate handle.
pub struct DagwEstimate {
    inner: EnsembleEstimate,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(DagwStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::NotPositiveDefinite { .. } => DagwStatus::NotPositiveDefinite,
            ref e if e.is_numerical() => DagwStatus::Numerical,
            _ => DagwStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(DagwStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> DagwStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DagwStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("internal panic: {msg}"));
            DagwStatus::Panic
        }
    }
}

unsafe fn read_matrix(data: *const f64, rows: usize, cols: usize, what: &str) -> Result<Matrix, Failure> {
    if data.is_null() {
        return Err(null(what));
    }
    let len = rows
        .checked_mul(cols)
        .ok_or_else(|| Failure(DagwStatus::InvalidArgument, format!("{what}: size overflow")))?;
    let v = std::slice::from_raw_parts(data, len).to_vec();
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Failure(
            DagwStatus::InvalidArgument,
            format!("{what}: non-finite entry"),
        ));
    }
    Ok(Matrix::from_vec(rows, cols, v)?)
}

unsafe fn read_symmetric(data: *const f64, p: usize, what: &str) -> Result<SymMatrix, Failure> {
    Ok(SymMatrix::new(read_matrix(data, p, p, what)?, dagw::io::SYMMETRY_TOL)?)
}

unsafe fn write_out(src: &[f64], out: *mut f64, len: usize, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    if len < src.len() {
        return Err(Failure(
            DagwStatus::BufferTooSmall,
            format!("{what}: need {} values, got room for {len}", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), out, src.len());
    Ok(())
}

unsafe fn handle<'a>(est: *const DagwEstimate) -> Result<&'a EnsembleEstimate, Failure> {
    est.as_ref().map(|h| &h.inner).ok_or_else(|| null("estimate handle"))
}

/// Message for the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn dagw_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dagw_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Runs the estimator on the `n x p` row-major data matrix `data` with `k`
/// random orderings and default settings otherwise. On success `*out` holds
/// a new handle.
///
/// # Safety
/// `data` must point to `n * p` readable doubles and `out` to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn dagw_estimate(
    data: *const f64,
    n: usize,
    p: usize,
    k: usize,
    variant: DagwVariant,
    seed: u64,
    out: *mut *mut DagwEstimate,
) -> DagwStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        let y = read_matrix(data, n, p, "data")?;
        let cfg = EnsembleConfig {
            k,
            ..EnsembleConfig::default()
        };
        let inner = estimate(&y, &cfg, variant.into(), seed)?;
        *out = Box::into_raw(Box::new(DagwEstimate { inner }));
        Ok(())
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `est` must be null or a handle from [`dagw_estimate`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn dagw_estimate_free(est: *mut DagwEstimate) {
    if !est.is_null() {
        drop(Box::from_raw(est));
    }
}

/// Dimension `p` of the estimate, or 0 for a null handle.
///
/// # Safety
/// `est` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dagw_estimate_dim(est: *const DagwEstimate) -> usize {
    est.as_ref().map_or(0, |h| h.inner.omega_check_tau.p())
}

/// Selected threshold (0 for unthresholded variants), or NaN for a null handle.
///
/// # Safety
/// `est` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn dagw_estimate_tau(est: *const DagwEstimate) -> f64 {
    est.as_ref().map_or(f64::NAN, |h| h.inner.tau_b)
}

/// Copies the final `p x p` precision matrix into `out` (row-major).
///
/// # Safety
/// `est` must be a live handle and `out` must hold `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn dagw_estimate_omega(est: *const DagwEstimate, out: *mut f64, len: usize) -> DagwStatus {
    guard(|| {
        let e = handle(est)?;
        write_out(e.omega_check_tau.as_matrix().as_slice(), out, len, "out")
    })
}

/// Copies the averaged unit lower-triangular factor into `l_out` (`p * p`,
/// row-major) and the averaged conditional variances into `d_out` (`p`).
///
/// # Safety
/// `est` must be a live handle; the buffers must hold the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn dagw_estimate_factors(
    est: *const DagwEstimate,
    l_out: *mut f64,
    l_len: usize,
    d_out: *mut f64,
    d_len: usize,
) -> DagwStatus {
    guard(|| {
        let e = handle(est)?;
        write_out(e.l_bar.as_slice(), l_out, l_len, "l_out")?;
        write_out(&e.d_bar, d_out, d_len, "d_out")
    })
}

/// Modified Cholesky decomposition of the symmetric positive definite `p x p`
/// matrix `a`: `a = L diag(d)^-1 L^T`.
///
/// # Safety
/// `a` must hold `p * p` doubles, `l_out` room for `p * p` and `d_out` for `p`.
#[no_mangle]
pub unsafe extern "C" fn dagw_mcd(a: *const f64, p: usize, l_out: *mut f64, d_out: *mut f64) -> DagwStatus {
    guard(|| {
        let a = read_symmetric(a, p, "a")?;
        let theta = mcd(&a)?;
        write_out(theta.l.as_slice(), l_out, p * p, "l_out")?;
        write_out(&theta.d, d_out, p, "d_out")
    })
}

/// The five losses of `est` against the truth `omega0` (both `p x p`), in the
/// order Stein, support absolute, support squared, global absolute, global
/// squared. The support is read from the factorization of `omega0`.
///
/// # Safety
/// `est` and `omega0` must hold `p * p` doubles and `out` room for 5.
#[no_mangle]
pub unsafe extern "C" fn dagw_losses(est: *const f64, omega0: *const f64, p: usize, out: *mut f64) -> DagwStatus {
    guard(|| {
        let est = read_symmetric(est, p, "est")?;
        let omega0 = read_symmetric(omega0, p, "omega0")?;
        let dag0 = true_dag(&omega0)?;
        let r = losses(&est, &omega0, &dag0)?;
        write_out(&r.values(), out, 5, "out")
    })
}
