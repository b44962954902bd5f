//! C ABI over `mfdyn`.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_parse`
//! or `mfdyn_train` and released by the matching `*_free`. Every fallible
//! function returns an [`MfdynStatus`]; on failure the message is available
//! from [`mfdyn_last_error`] on the same thread. Panics are caught and
//! reported as [`MfdynStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use libc::{c_char, c_int, size_t};
use mfdyn::dynamics::{DynamicsError, TrainConfig, Trainer};
use mfdyn::linalg::{singular_values, DenseMatrix};
use mfdyn::observation::{
    classify_connectivity, ConnectivityClass, IncompleteMatrix, ObservationError, ParseOptions,
};
use mfdyn::oracles::{
    min_nuclear_norm_bipartite_blocks, min_nuclear_norm_general, min_rank_search,
    ConvexSolverConfig, OracleError,
};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfdynStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Numerical = 4,
    NotConverged = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MfdynConnectivity {
    Connected = 0,
    DisconnectedCompleteBipartite = 1,
    Disconnected = 2,
}

/// Opaque partially observed square matrix.
pub struct MfdynMatrix(IncompleteMatrix);

/// Opaque result of a finished training run.
pub struct MfdynTrainResult {
    d: usize,
    output: Vec<f64>,
    singular_values: Vec<f64>,
    final_loss: f64,
    steps: usize,
    converged: bool,
    learned_rank: usize,
}

/// Training options. Zero or negative `learning_rate`, and zero
/// `max_steps`, select the instance-scaled defaults.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct MfdynTrainOptions {
    pub init_variance: f64,
    pub learning_rate: f64,
    pub max_steps: u64,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(MfdynStatus, String);

impl From<ObservationError> for Failure {
    fn from(e: ObservationError) -> Self {
        let status = match e {
            ObservationError::Parse { .. } | ObservationError::Json(_) => MfdynStatus::Parse,
            _ => MfdynStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

impl From<DynamicsError> for Failure {
    fn from(e: DynamicsError) -> Self {
        let status = match e {
            DynamicsError::InvalidConfig(_) => MfdynStatus::InvalidArgument,
            _ => MfdynStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

impl From<OracleError> for Failure {
    fn from(e: OracleError) -> Self {
        let status = match e {
            OracleError::NotConverged { .. } | OracleError::StageNotConverged { .. } => {
                MfdynStatus::NotConverged
            }
            OracleError::InvalidConfig(_) | OracleError::NoObservations => {
                MfdynStatus::InvalidArgument
            }
            _ => MfdynStatus::Numerical,
        };
        Failure(status, e.to_string())
    }
}

impl From<mfdyn::linalg::LinalgError> for Failure {
    fn from(e: mfdyn::linalg::LinalgError) -> Self {
        Failure(MfdynStatus::Numerical, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(MfdynStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(MfdynStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> MfdynStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            MfdynStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            MfdynStatus::Panic
        }
    }
}

unsafe fn matrix_ref<'a>(m: *const MfdynMatrix) -> Result<&'a IncompleteMatrix, Failure> {
    m.as_ref().map(|m| &m.0).ok_or_else(|| null("matrix"))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null("output pointer"));
    }
    out.write(value);
    Ok(())
}

unsafe fn copy_out(src: &[f64], buf: *mut f64, len: size_t) -> Result<(), Failure> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < src.len() {
        return Err(Failure(
            MfdynStatus::BufferTooSmall,
            format!("buffer holds {len} values, {} needed", src.len()),
        ));
    }
    ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn mfdyn_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn mfdyn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses the text matrix format (`*` marks a missing entry) or JSON.
///
/// # Safety
/// `text` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mfdyn_matrix_parse(
    text: *const c_char,
    out: *mut *mut MfdynMatrix,
) -> MfdynStatus {
    guard(|| {
        if text.is_null() {
            return Err(null("text"));
        }
        let src = CStr::from_ptr(text)
            .to_str()
            .map_err(|e| Failure(MfdynStatus::Parse, e.to_string()))?;
        let m = IncompleteMatrix::parse_auto(src, ParseOptions::default())?;
        write_out(out, Box::into_raw(Box::new(MfdynMatrix(m))))
    })
}

/// Builds a `d x d` matrix from row-major `values` and a row-major 0/1 `mask`.
///
/// # Safety
/// `values` and `mask` must each point to `d * d` elements.
#[no_mangle]
pub unsafe extern "C" fn mfdyn_matrix_new(
    d: size_t,
    values: *const f64,
    mask: *const u8,
    out: *mut *mut MfdynMatrix,
) -> MfdynStatus {
    guard(|| {
        if values.is_null() || mask.is_null() {
            return Err(null("values or mask"));
        }
        if d == 0 {
            return Err(invalid("d must be positive"));
        }
        let len = d.checked_mul(d).ok_or_else(|| invalid("d is too large"))?;
        let v = std::slice::from_raw_parts(values, len).to_vec();
        let mut k = Vec::with_capacity(len);
        for &b in std::slice::from_raw_parts(mask, len) {
            match b {
                0 => k.push(0.0),
                1 => k.push(1.0),
                _ => return Err(invalid(format!("mask entries must be 0 or 1, got {b}"))),
            }
        }
        let m = IncompleteMatrix::new(
            DenseMatrix::from_row_major(d, d, v)?,
            DenseMatrix::from_row_major(d, d, k)?,
        )?;
        write_out(out, Box::into_raw(Box::new(MfdynMatrix(m))))
    })
}

/// # Safety
/// `m` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mfdyn_matrix_free(m: *mut MfdynMatrix) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Dimension `d`, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mfdyn_matrix_dim(m: *const MfdynMatrix) -> size_t {
    m.as_ref().map_or(0, |m| m.0.d())
}

/// Number of observed entries, or 0 for a null handle.
///
/// # Safety
/// `m` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mfdyn_matrix_observed_count(m: *const MfdynMatrix) -> size_t {
    m.as_ref().map_or(0, |m| m.0.n())
}

/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mfdyn_connectivity(
    m: *const MfdynMatrix,
    out: *mut MfdynConnectivity,
) -> MfdynStatus {
    guard(|| {
        let class = match classify_connectivity(matrix_ref(m)?)? {
            ConnectivityClass::Connected => MfdynConnectivity::Connected,
            ConnectivityClass::DisconnectedCompleteBipartite => {
                MfdynConnectivity::DisconnectedCompleteBipartite
            }
            ConnectivityClass::Disconnected => MfdynConnectivity::Disconnected,
        };
        write_out(out, class)
    })
}

/// Minimum nuclear norm over completions. Uses the closed form when every
/// component is complete bipartite and the convex solver otherwise.
///
/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mfdyn_min_nuclear_norm(
    m: *const MfdynMatrix,
    out: *mut f64,
) -> MfdynStatus {
    guard(|| {
        let m = matrix_ref(m)?;
        let value = match min_nuclear_norm_bipartite_blocks(m) {
            Ok(r) => r.objective,
            Err(OracleError::NotCompleteBipartite(_)) => {
                min_nuclear_norm_general(m, &ConvexSolverConfig::default())?.objective
            }
            Err(e) => return Err(e.into()),
        };
        write_out(out, value)
    })
}

/// Smallest rank found by a restarted alternating least-squares search.
/// This is an upper bound on the minimum completion rank.
///
/// # Safety
/// `m` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mfdyn_min_rank(
    m: *const MfdynMatrix,
    restarts: size_t,
    out: *mut size_t,
) -> MfdynStatus {
    guard(|| {
        let r = min_rank_search(matrix_ref(m)?, restarts, 1e-6)?;
        write_out(out, r.rank)
    })
}

/// Default options: variance 1e-8, instance-scaled step size and step budget, seed 0.
#[no_mangle]
pub extern "C" fn mfdyn_train_options_default() -> MfdynTrainOptions {
    MfdynTrainOptions {
        init_variance: TrainConfig::default().init_variance,
        learning_rate: 0.0,
        max_steps: 0,
        seed: 0,
    }
}

/// Trains `W = AB` by gradient descent from a small Gaussian initialization.
///
/// # Safety
/// `m` must be a live handle, `opts` null or valid, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn mfdyn_train(
    m: *const MfdynMatrix,
    opts: *const MfdynTrainOptions,
    out: *mut *mut MfdynTrainResult,
) -> MfdynStatus {
    guard(|| {
        let m = matrix_ref(m)?;
        let opts = opts
            .as_ref()
            .copied()
            .unwrap_or_else(|| mfdyn_train_options_default());
        let mut cfg = TrainConfig {
            init_variance: opts.init_variance,
            rng_seed: opts.seed,
            ..TrainConfig::for_instance(m)
        };
        if opts.learning_rate > 0.0 {
            cfg.learning_rate = opts.learning_rate;
        } else if opts.learning_rate.is_nan() {
            return Err(invalid("learning_rate is NaN"));
        }
        if opts.max_steps > 0 {
            cfg.max_steps =
                usize::try_from(opts.max_steps).map_err(|_| invalid("max_steps is too large"))?;
        }
        let mut t = Trainer::new(m, cfg.clone())?;
        while !t.is_finished() {
            t.step()?;
        }
        let theta = t.theta();
        let sv = singular_values(&theta.without_isolated(m).output())?;
        let result = MfdynTrainResult {
            d: m.d(),
            output: theta.output().into_vec(),
            learned_rank: cfg.rank_policy.rank_of(&sv),
            singular_values: sv,
            final_loss: t.loss(),
            steps: t.step_index(),
            converged: t.is_converged(),
        };
        write_out(out, Box::into_raw(Box::new(result)))
    })
}

/// # Safety
/// `r` must be null or a handle from [`mfdyn_train`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn mfdyn_train_result_free(r: *mut MfdynTrainResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}

/// Copies the learned `W` (row-major, `d * d` values) into `buf`.
///
/// # Safety
/// `r` must be a live handle and `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn mfdyn_train_result_output(
    r: *const MfdynTrainResult,
    buf: *mut f64,
    len: size_t,
) -> MfdynStatus {
    guard(|| {
        let r = r.as_ref().ok_or_else(|| null("result"))?;
        copy_out(&r.output, buf, len)
    })
}

/// Copies the `d` singular values of `W` (isolated rows and columns
/// removed), in descending order, into `buf`.
///
/// # Safety
/// `r` must be a live handle and `buf` must hold `len` values.
#[no_mangle]
pub unsafe extern "C" fn mfdyn_train_result_singular_values(
    r: *const MfdynTrainResult,
    buf: *mut f64,
    len: size_t,
) -> MfdynStatus {
    guard(|| {
        let r = r.as_ref().ok_or_else(|| null("result"))?;
        copy_out(&r.singular_values, buf, len)
    })
}

/// Dimension of the result, or 0 for a null handle.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mfdyn_train_result_dim(r: *const MfdynTrainResult) -> size_t {
    r.as_ref().map_or(0, |r| r.d)
}

/// Final empirical risk, or NaN for a null handle.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mfdyn_train_result_loss(r: *const MfdynTrainResult) -> f64 {
    r.as_ref().map_or(f64::NAN, |r| r.final_loss)
}

/// Number of gradient steps taken, or 0 for a null handle.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mfdyn_train_result_steps(r: *const MfdynTrainResult) -> size_t {
    r.as_ref().map_or(0, |r| r.steps)
}

/// 1 if the loss reached its tolerance, 0 otherwise or for a null handle.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mfdyn_train_result_converged(r: *const MfdynTrainResult) -> c_int {
    r.as_ref().map_or(0, |r| c_int::from(r.converged))
}

/// Numerical rank of the learned `W`, or 0 for a null handle.
///
/// # Safety
/// `r` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn mfdyn_train_result_rank(r: *const MfdynTrainResult) -> size_t {
    r.as_ref().map_or(0, |r| r.learned_rank)
}
