//! C interface. Objects are opaque handles created by `qif_*_new`/`qif_*_parse`
//! style functions and released with the matching `qif_*_free`. Every
//! fallible call returns a [`QifStatus`]; on failure the message is available
//! from [`qif_last_error_message`] on the same thread until the next call.

use std::cell::RefCell;
use std::ffi::{c_char, c_int, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use nalgebra::{DMatrix, DVector};
use qif_core::io::{load_dataset, ColumnSchema};
use qif_core::{
    build_basis, fit, profile_test, AuxiliaryInfo, CorrelationStructure, ExtendedScoreConfig, FitOptions, FitResult,
    LongitudinalDataset, MarginalModelSpec, QifError, Subject,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QifStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidData = 3,
    InvalidSubgroup = 4,
    Numerical = 5,
    NonConvergence = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QifLink {
    Identity = 0,
    Logit = 1,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QifWorking {
    Independence = 0,
    CompoundSymmetry = 1,
    Ar1 = 2,
}

/// A balanced panel.
pub struct QifDataset(LongitudinalDataset);

/// A subgroup partition with its mean vectors.
pub struct QifAux(AuxiliaryInfo);

/// The outcome of [`qif_fit`].
pub struct QifFit(FitResult);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &QifError) -> QifStatus {
    match e {
        QifError::InvalidDataset(_)
        | QifError::MalformedRow { .. }
        | QifError::UnbalancedSubject(_)
        | QifError::EmptyDataset
        | QifError::ZeroVariance(_)
        | QifError::DimensionMismatch(_)
        | QifError::DimensionTooSmall { .. } => QifStatus::InvalidData,
        QifError::EmptySubgroup(_) | QifError::NotAPartition { .. } | QifError::InvalidSubgroup(_) => {
            QifStatus::InvalidSubgroup
        }
        QifError::SingularWeightMatrix { .. } | QifError::RankDeficient | QifError::DivisionByZero(_) => {
            QifStatus::Numerical
        }
        QifError::NonConvergence { .. } | QifError::TooManyFailures { .. } => QifStatus::NonConvergence,
        QifError::Io(_) => QifStatus::Io,
        QifError::InvalidModel(_) | QifError::InvalidSize { .. } | QifError::Config(_) => QifStatus::InvalidArgument,
    }
}

enum Failure {
    Status(QifStatus, String),
    Core(QifError),
}

impl From<QifError> for Failure {
    fn from(e: QifError) -> Self {
        Failure::Core(e)
    }
}

fn null(what: &str) -> Failure {
    Failure::Status(QifStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> QifStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => QifStatus::Ok,
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg);
            s
        }
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic".into());
            QifStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(QifStatus::InvalidArgument, format!("{what} is not valid UTF-8")))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output handle"));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library from this thread.
#[no_mangle]
pub extern "C" fn qif_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a dataset from flat arrays. `response` holds `n*q` values, subject
/// by subject; `covariates` holds `n*q*p` values, subject by subject and
/// time point by time point.
///
/// # Safety
/// Pointers must reference arrays of the stated lengths; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn qif_dataset_new(
    n: usize,
    q: usize,
    p: usize,
    response: *const f64,
    covariates: *const f64,
    out: *mut *mut QifDataset,
) -> QifStatus {
    guard(|| {
        if n == 0 || q == 0 || p == 0 {
            return Err(Failure::Status(
                QifStatus::InvalidArgument,
                "n, q and p must be positive".into(),
            ));
        }
        let y = slice_arg(response, n * q, "response")?;
        let x = slice_arg(covariates, n * q * p, "covariates")?;
        let subjects = (0..n)
            .map(|i| {
                Subject::new(
                    DVector::from_row_slice(&y[i * q..(i + 1) * q]),
                    DMatrix::from_row_slice(q, p, &x[i * q * p..(i + 1) * q * p]),
                )
            })
            .collect();
        put(out, QifDataset(LongitudinalDataset::new(subjects)?))
    })
}

/// Reads a long-format CSV file; `dropped` (nullable) receives the number of
/// incomplete subjects removed.
///
/// # Safety
/// Strings must be NUL-terminated; `covariates` must hold `n_covariates` strings.
#[no_mangle]
pub unsafe extern "C" fn qif_dataset_load_csv(
    path: *const c_char,
    id: *const c_char,
    time: *const c_char,
    response: *const c_char,
    covariates: *const *const c_char,
    n_covariates: usize,
    dropped: *mut usize,
    out: *mut *mut QifDataset,
) -> QifStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        let names = slice_arg(covariates, n_covariates, "covariates")?
            .iter()
            .map(|&c| str_arg(c, "covariate name"))
            .collect::<Result<Vec<_>, _>>()?;
        let schema = ColumnSchema::new(
            str_arg(id, "id")?,
            str_arg(time, "time")?,
            str_arg(response, "response")?,
            &names,
        );
        let loaded = load_dataset(path, &schema)?;
        if !dropped.is_null() {
            *dropped = loaded.dropped;
        }
        put(out, QifDataset(loaded.dataset))
    })
}

/// # Safety
/// `ds` must be a live handle; the outputs may be null.
#[no_mangle]
pub unsafe extern "C" fn qif_dataset_dims(
    ds: *const QifDataset,
    n: *mut usize,
    q: *mut usize,
    p: *mut usize,
) -> QifStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| null("dataset"))?.0;
        for (o, v) in [(n, ds.n()), (q, ds.q()), (p, ds.p())] {
            if !o.is_null() {
                *o = v;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `ds` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn qif_dataset_free(ds: *mut QifDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Parses subgroup definitions, one per line. When `phi` is null the means
/// must be written inline after `=>`; otherwise `phi` holds `K*q` values,
/// group by group, and inline means are ignored.
///
/// # Safety
/// `text` must be NUL-terminated; `phi` must hold `phi_len` values.
#[no_mangle]
pub unsafe extern "C" fn qif_aux_parse(
    text: *const c_char,
    phi: *const f64,
    phi_len: usize,
    out: *mut *mut QifAux,
) -> QifStatus {
    guard(|| {
        let (partition, inline) = AuxiliaryInfo::parse(str_arg(text, "text")?)?;
        let means = if phi.is_null() {
            inline.ok_or_else(|| {
                Failure::Status(
                    QifStatus::InvalidSubgroup,
                    "no subgroup means given inline or as an array".into(),
                )
            })?
        } else {
            let k = partition.k();
            if phi_len == 0 || !phi_len.is_multiple_of(k) {
                return Err(Failure::Status(
                    QifStatus::InvalidArgument,
                    format!("{phi_len} mean values do not split into {k} groups"),
                ));
            }
            let q = phi_len / k;
            slice_arg(phi, phi_len, "phi")?
                .chunks(q)
                .map(DVector::from_row_slice)
                .collect()
        };
        put(out, QifAux(AuxiliaryInfo::new(partition, means)?))
    })
}

/// # Safety
/// `aux` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn qif_aux_free(aux: *mut QifAux) {
    if !aux.is_null() {
        drop(Box::from_raw(aux));
    }
}

unsafe fn configure(
    ds: &LongitudinalDataset,
    link: c_int,
    working: c_int,
    aux: *const QifAux,
) -> Result<ExtendedScoreConfig, Failure> {
    let bad = |what: &str, v: c_int| Failure::Status(QifStatus::InvalidArgument, format!("unknown {what} code {v}"));
    let spec = match link {
        x if x == QifLink::Identity as c_int => MarginalModelSpec::gaussian(),
        x if x == QifLink::Logit as c_int => MarginalModelSpec::bernoulli(),
        other => return Err(bad("link", other)),
    };
    let structure = match working {
        x if x == QifWorking::Independence as c_int => CorrelationStructure::Independence,
        x if x == QifWorking::CompoundSymmetry as c_int => CorrelationStructure::CompoundSymmetry,
        x if x == QifWorking::Ar1 as c_int => CorrelationStructure::Ar1,
        other => return Err(bad("working structure", other)),
    };
    let aux = aux.as_ref().map(|a| a.0.clone());
    Ok(ExtendedScoreConfig::new(spec, build_basis(structure, ds.q())?, aux))
}

fn options(two_step: c_int) -> FitOptions {
    FitOptions {
        two_step: two_step != 0,
        ..FitOptions::default()
    }
}

/// Fits the model; a null `aux` gives plain QIF. `link` and `working` take
/// [`QifLink`] and [`QifWorking`] values. A fit that stops at the
/// iteration cap is still returned; check [`qif_fit_converged`].
///
/// # Safety
/// `ds` must be live, `aux` live or null, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn qif_fit(
    ds: *const QifDataset,
    link: c_int,
    working: c_int,
    aux: *const QifAux,
    two_step: c_int,
    out: *mut *mut QifFit,
) -> QifStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| null("dataset"))?.0;
        let config = configure(ds, link, working, aux)?;
        put(out, QifFit(fit(&config, ds, None, &options(two_step))?))
    })
}

/// Number of coefficients, or 0 for a null handle.
///
/// # Safety
/// `f` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn qif_fit_p(f: *const QifFit) -> usize {
    f.as_ref().map_or(0, |f| f.0.beta_hat.len())
}

/// Copies `β̂` into `out[0..len]`; `len` must be at least `p`.
///
/// # Safety
/// `f` must be live and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn qif_fit_beta(f: *const QifFit, out: *mut f64, len: usize) -> QifStatus {
    guard(|| {
        let f = &f.as_ref().ok_or_else(|| null("fit"))?.0;
        copy_out(f.beta_hat.as_slice(), out, len)
    })
}

/// Copies the `p × p` covariance of `β̂` row by row.
///
/// # Safety
/// `f` must be live and `out` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn qif_fit_covariance(f: *const QifFit, out: *mut f64, len: usize) -> QifStatus {
    guard(|| {
        let f = &f.as_ref().ok_or_else(|| null("fit"))?.0;
        let rows: Vec<f64> = f.covariance.transpose().iter().copied().collect();
        copy_out(&rows, out, len)
    })
}

unsafe fn copy_out(values: &[f64], out: *mut f64, len: usize) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output buffer"));
    }
    if len < values.len() {
        return Err(Failure::Status(
            QifStatus::InvalidArgument,
            format!("buffer holds {len} values, {} needed", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

/// `Q_n(β̂)`, NaN for a null handle.
///
/// # Safety
/// `f` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn qif_fit_objective(f: *const QifFit) -> f64 {
    f.as_ref().map_or(f64::NAN, |f| f.0.objective)
}

/// 1 when the solver met its tolerances, 0 otherwise or for a null handle.
///
/// # Safety
/// `f` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn qif_fit_converged(f: *const QifFit) -> c_int {
    f.as_ref().map_or(0, |f| c_int::from(f.0.converged))
}

/// # Safety
/// `f` must be live or null.
#[no_mangle]
pub unsafe extern "C" fn qif_fit_iterations(f: *const QifFit) -> usize {
    f.as_ref().map_or(0, |f| f.0.iterations)
}

/// # Safety
/// `f` must come from this library and not be used afterwards. Null is a no-op.
#[no_mangle]
pub unsafe extern "C" fn qif_fit_free(f: *mut QifFit) {
    if !f.is_null() {
        drop(Box::from_raw(f));
    }
}

/// Profile test of `β[indices[j]] = values[j]` (0-based indices).
///
/// # Safety
/// `ds` live, `aux` live or null, arrays of length `m`, outputs writable.
#[no_mangle]
pub unsafe extern "C" fn qif_profile_test(
    ds: *const QifDataset,
    link: c_int,
    working: c_int,
    aux: *const QifAux,
    indices: *const usize,
    values: *const f64,
    m: usize,
    statistic: *mut f64,
    p_value: *mut f64,
) -> QifStatus {
    guard(|| {
        let ds = &ds.as_ref().ok_or_else(|| null("dataset"))?.0;
        if statistic.is_null() || p_value.is_null() {
            return Err(null("output"));
        }
        let config = configure(ds, link, working, aux)?;
        let idx = slice_arg(indices, m, "indices")?;
        let vals = slice_arg(values, m, "values")?;
        let t = profile_test(&config, ds, idx, vals, &FitOptions::default())?;
        *statistic = t.statistic;
        *p_value = t.p_value;
        Ok(())
    })
}
