//! C interface to the cfunhddc library.
//!
//! Every function returns a [`CfhStatus`]; on failure the message is kept per
//! thread and can be read with [`cfh_last_error_message`]. Objects are opaque
//! handles created by `cfh_*_new`-style calls and released with the matching
//! `cfh_*_free`. No panic crosses the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cfunhddc::ecm::{DimensionRule, EcmConfig, FitResult};
use cfunhddc::funbasis::{
    build_bspline_basis, smooth_curves, BasisSystem, Curve, CurveSet, Domain, Observations,
};
use cfunhddc::init::InitConfig;
use cfunhddc::selection::{count_parameters, fit_with_restarts};
use cfunhddc::simulate::{simulate, DatasetKind, SimSpec};
use cfunhddc::Error;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfhStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    /// Basis construction or smoothing failed.
    Basis = 3,
    /// A numerical failure or degenerate cluster during fitting.
    Numeric = 4,
    /// Model selection or dimension error.
    Selection = 5,
    Io = 6,
    Panic = 7,
}

/// Simulated dataset families for [`cfh_simulate`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CfhDataset {
    Dataset1 = 0,
    Dataset2 = 1,
    NormalOnly = 2,
}

/// A set of multivariate curves.
pub struct CfhCurves {
    curves: CurveSet,
}

/// A B-spline basis for every component.
pub struct CfhBasis {
    basis: BasisSystem,
}

/// A fitted model with its classification.
pub struct CfhFit {
    fit: FitResult,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> CfhStatus {
    match e {
        Error::InvalidBasis(_)
        | Error::InvalidDomain { .. }
        | Error::InvalidCurves(_)
        | Error::NotPositiveDefinite { .. }
        | Error::Smoothing { .. } => CfhStatus::Basis,
        Error::Numeric(_) | Error::DegenerateCluster { .. } => CfhStatus::Numeric,
        Error::Dimension { .. } | Error::Selection(_) => CfhStatus::Selection,
        Error::Io(_) | Error::Csv(_) | Error::Json(_) | Error::Ingest { .. } => CfhStatus::Io,
        _ => CfhStatus::InvalidArgument,
    }
}

struct Failure(CfhStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(CfhStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CfhStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CfhStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CfhStatus::Panic
        }
    }
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cfh_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or NULL. The pointer stays
/// valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn cfh_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Simulates one of the benchmark datasets with its default composition.
///
/// # Safety
/// `out` must be a valid pointer to write the new handle to.
#[no_mangle]
pub unsafe extern "C" fn cfh_simulate(
    kind: CfhDataset,
    seed: u64,
    out: *mut *mut CfhCurves,
) -> CfhStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        let kind = match kind {
            CfhDataset::Dataset1 => DatasetKind::Dataset1,
            CfhDataset::Dataset2 => DatasetKind::Dataset2,
            CfhDataset::NormalOnly => DatasetKind::NormalOnly,
        };
        let data = simulate(&SimSpec::new(kind, seed))?;
        *out = Box::into_raw(Box::new(CfhCurves {
            curves: data.curves,
        }));
        Ok(())
    })
}

/// Builds curves observed on one shared grid of `n_times` points.
/// `values` holds `n_curves * n_components * n_times` numbers, curve-major,
/// then component, then time.
///
/// # Safety
/// `times` and `values` must point to arrays of the stated lengths and `out`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn cfh_curves_from_grid(
    n_curves: usize,
    n_components: usize,
    n_times: usize,
    times: *const f64,
    values: *const f64,
    out: *mut *mut CfhCurves,
) -> CfhStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        let total = n_curves
            .checked_mul(n_components)
            .and_then(|v| v.checked_mul(n_times))
            .ok_or_else(|| Failure(CfhStatus::InvalidArgument, "array size overflows".into()))?;
        if total == 0 {
            return Err(Failure(
                CfhStatus::InvalidArgument,
                "empty curve set".into(),
            ));
        }
        let times = unsafe { slice(times, n_times, "times") }?;
        let values = unsafe { slice(values, total, "values") }?;
        let (lo, hi) = times
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| {
                (lo.min(t), hi.max(t))
            });
        let domain = Domain::new(lo, hi)?;
        let curves = (0..n_curves)
            .map(|i| Curve {
                id: i.to_string(),
                components: (0..n_components)
                    .map(|j| {
                        let start = (i * n_components + j) * n_times;
                        Observations::new(times.to_vec(), values[start..start + n_times].to_vec())
                    })
                    .collect(),
            })
            .collect();
        *out = Box::into_raw(Box::new(CfhCurves {
            curves: CurveSet::new(curves, domain)?,
        }));
        Ok(())
    })
}

/// Number of curves, or 0 for a null handle.
///
/// # Safety
/// `curves` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfh_curves_len(curves: *const CfhCurves) -> usize {
    unsafe { curves.as_ref() }.map_or(0, |c| c.curves.len())
}

/// # Safety
/// `curves` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn cfh_curves_free(curves: *mut CfhCurves) {
    if !curves.is_null() {
        drop(unsafe { Box::from_raw(curves) });
    }
}

/// Clamped B-spline basis with `size` functions of `degree` per component,
/// on the domain of `curves`.
///
/// # Safety
/// `curves` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cfh_basis_new(
    curves: *const CfhCurves,
    size: usize,
    degree: usize,
    out: *mut *mut CfhBasis,
) -> CfhStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        let curves = unsafe { curves.as_ref() }.ok_or_else(|| null("curves"))?;
        let sizes = vec![size; curves.curves.n_components()];
        let basis = build_bspline_basis(&sizes, degree, curves.curves.domain())?;
        *out = Box::into_raw(Box::new(CfhBasis { basis }));
        Ok(())
    })
}

/// # Safety
/// `basis` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn cfh_basis_free(basis: *mut CfhBasis) {
    if !basis.is_null() {
        drop(unsafe { Box::from_raw(basis) });
    }
}

/// Smooths `curves` on `basis` and fits `k` clusters of common dimension `d`,
/// keeping the best of `nb_init` trimmed k-means starts.
///
/// # Safety
/// `curves` and `basis` must be live handles and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn cfh_fit(
    curves: *const CfhCurves,
    basis: *const CfhBasis,
    k: usize,
    d: usize,
    nb_init: usize,
    seed: u64,
    out: *mut *mut CfhFit,
) -> CfhStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        let curves = unsafe { curves.as_ref() }.ok_or_else(|| null("curves"))?;
        let basis = unsafe { basis.as_ref() }.ok_or_else(|| null("basis"))?;
        let coeffs = smooth_curves(&curves.curves, &basis.basis)?;
        let init = InitConfig {
            nb_init,
            seed,
            ..InitConfig::default()
        };
        let fit = fit_with_restarts(
            &coeffs,
            basis.basis.metric(),
            k,
            &DimensionRule::common(d, k),
            &init,
            &EcmConfig::default(),
        )?;
        *out = Box::into_raw(Box::new(CfhFit { fit }));
        Ok(())
    })
}

/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfh_fit_n_clusters(fit: *const CfhFit) -> usize {
    unsafe { fit.as_ref() }.map_or(0, |f| f.fit.n_clusters())
}

/// Observed log-likelihood; NaN for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfh_fit_loglik(fit: *const CfhFit) -> f64 {
    unsafe { fit.as_ref() }.map_or(f64::NAN, |f| f.fit.loglik)
}

/// BIC (larger is better); NaN for a null handle.
///
/// # Safety
/// `fit` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn cfh_fit_bic(fit: *const CfhFit) -> f64 {
    unsafe { fit.as_ref() }.map_or(f64::NAN, |f| f.fit.bic)
}

/// Copies the 0-based cluster labels into `labels`, which must hold exactly
/// as many entries as there are curves.
///
/// # Safety
/// `fit` must be a live handle and `labels` writable for `len` entries.
#[no_mangle]
pub unsafe extern "C" fn cfh_fit_labels(
    fit: *const CfhFit,
    labels: *mut usize,
    len: usize,
) -> CfhStatus {
    guard(|| {
        let fit = unsafe { fit.as_ref() }.ok_or_else(|| null("fit"))?;
        copy_out(&fit.fit.labels, labels, len, |l| *l)
    })
}

/// Copies the outlier flags (1 = outlier) into `flags`.
///
/// # Safety
/// `fit` must be a live handle and `flags` writable for `len` entries.
#[no_mangle]
pub unsafe extern "C" fn cfh_fit_outliers(
    fit: *const CfhFit,
    flags: *mut u8,
    len: usize,
) -> CfhStatus {
    guard(|| {
        let fit = unsafe { fit.as_ref() }.ok_or_else(|| null("fit"))?;
        copy_out(&fit.fit.outliers, flags, len, |o| u8::from(*o))
    })
}

fn copy_out<S, T>(src: &[S], dst: *mut T, len: usize, f: impl Fn(&S) -> T) -> Result<(), Failure> {
    if len != src.len() {
        return Err(Failure(
            CfhStatus::InvalidArgument,
            format!("buffer holds {len} entries, {} needed", src.len()),
        ));
    }
    if dst.is_null() {
        return Err(null("output buffer"));
    }
    let dst = unsafe { std::slice::from_raw_parts_mut(dst, len) };
    for (d, s) in dst.iter_mut().zip(src) {
        *d = f(s);
    }
    Ok(())
}

/// # Safety
/// `fit` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn cfh_fit_free(fit: *mut CfhFit) {
    if !fit.is_null() {
        drop(unsafe { Box::from_raw(fit) });
    }
}

/// Free-parameter count of a model with `k` clusters in a basis of size `b`
/// with intrinsic dimensions `dims[0..k]`.
///
/// # Safety
/// `dims` must hold `k` entries and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn cfh_count_parameters(
    k: usize,
    b: usize,
    dims: *const usize,
    out: *mut u64,
) -> CfhStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        let dims = unsafe { slice(dims, k, "dims") }?;
        *out = count_parameters(k, b, dims)?.total;
        Ok(())
    })
}

/// Adjusted Rand index between two labelings of `n` points.
///
/// # Safety
/// `a` and `b` must hold `n` entries and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn cfh_ari(
    a: *const i64,
    b: *const i64,
    n: usize,
    out: *mut f64,
) -> CfhStatus {
    guard(|| {
        let out = unsafe { out_ptr(out, "out") }?;
        let a = unsafe { slice(a, n, "a") }?;
        let b = unsafe { slice(b, n, "b") }?;
        *out = cfunhddc::metrics::ari(a, b)?;
        Ok(())
    })
}
