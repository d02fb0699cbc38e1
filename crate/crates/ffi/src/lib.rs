//! C interface to `nldisp`.
//!
//! A model is created from a JSON run configuration and owned by the caller
//! through an opaque pointer. Every function returns an [`NldispStatus`]; on
//! failure the message is available from [`nldisp_last_error`] on the same
//! thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use nldisp::config::RunConfig;
use nldisp::continuation::{solution_at, trace_branch, Branch, ContinuationConfig};
use nldisp::geometry::QuadratureGrid;
use nldisp::logistic::LogisticProblem;
use nldisp::operator::PrincipalEigenpair;
use nldisp::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NldispStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    BufferTooSmall = 4,
    HypothesisViolation = 5,
    SolverFailure = 6,
    NoBranch = 7,
    Io = 8,
    Panic = 9,
}

/// Opaque model handle.
pub struct NldispModel {
    cfg: RunConfig,
    grid: QuadratureGrid,
    problem: LogisticProblem,
    eig: PrincipalEigenpair,
    continuation: ContinuationConfig,
    branch: Option<Branch>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> NldispStatus {
    match err {
        Error::Config(_) | Error::UnknownPreset(_) | Error::Json(_) | Error::Csv(_) => NldispStatus::Config,
        Error::Io { .. } => NldispStatus::Io,
        Error::KreinRutmanViolation { .. }
        | Error::NonpositiveEigenvalue(_)
        | Error::NegativeKernel { .. }
        | Error::NegativeWeight { .. }
        | Error::Hypothesis(_)
        | Error::NonCauchy(_) => NldispStatus::HypothesisViolation,
        Error::EigenSolver(_)
        | Error::SingularJacobian { .. }
        | Error::StepFailure(_)
        | Error::LostPositivity { .. }
        | Error::SingularSystem(_)
        | Error::OutsideAdmissibleSet(_) => NldispStatus::SolverFailure,
        _ => NldispStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), NldispStatus>) -> NldispStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NldispStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic".into());
            NldispStatus::Panic
        }
    }
}

fn fail(err: Error) -> NldispStatus {
    let s = status_of(&err);
    set_error(err.to_string());
    s
}

fn null(what: &str) -> NldispStatus {
    set_error(format!("{what} is null"));
    NldispStatus::NullPointer
}

unsafe fn model_ref<'a>(m: *const NldispModel) -> Result<&'a NldispModel, NldispStatus> {
    m.as_ref().ok_or_else(|| null("model"))
}

unsafe fn model_mut<'a>(m: *mut NldispModel) -> Result<&'a mut NldispModel, NldispStatus> {
    m.as_mut().ok_or_else(|| null("model"))
}

unsafe fn out_slice<'a>(buf: *mut f64, len: usize, needed: usize) -> Result<&'a mut [f64], NldispStatus> {
    if buf.is_null() {
        return Err(null("buffer"));
    }
    if len < needed {
        set_error(format!("buffer holds {len} values, {needed} needed"));
        return Err(NldispStatus::BufferTooSmall);
    }
    Ok(std::slice::from_raw_parts_mut(buf, needed))
}

fn build(json: &str) -> nldisp::Result<NldispModel> {
    let mut cfg = RunConfig::from_json(json)?;
    cfg.base_dir = std::env::current_dir().map_err(|e| Error::Config(e.to_string()))?;
    let (_, grid) = cfg.build_grid()?;
    let kernel = cfg.kernel_spec(&grid)?;
    let weight = cfg.weight_spec(&grid)?;
    let problem = LogisticProblem::new(&kernel, &weight, &grid)?;
    let eig = problem.op.principal_eigenpair()?;
    let continuation = cfg.continuation.clone();
    Ok(NldispModel {
        cfg,
        grid,
        problem,
        eig,
        continuation,
        branch: None,
    })
}

/// Message of the last failure on this thread, or null. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nldisp_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a model from a NUL-terminated JSON configuration. Relative
/// tabulated paths resolve against the working directory.
///
/// # Safety
/// `json` must be a valid C string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nldisp_model_new(json: *const c_char, out: *mut *mut NldispModel) -> NldispStatus {
    guard(|| {
        if json.is_null() {
            return Err(null("json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(json).to_str().map_err(|e| {
            set_error(format!("configuration is not UTF-8: {e}"));
            NldispStatus::Config
        })?;
        let model = build(text).map_err(fail)?;
        *out = Box::into_raw(Box::new(model));
        Ok(())
    })
}

/// # Safety
/// `model` must come from [`nldisp_model_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nldisp_model_free(model: *mut NldispModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nldisp_model_node_count(model: *const NldispModel, out: *mut usize) -> NldispStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.grid.len();
        Ok(())
    })
}

/// Spatial dimension of the grid.
///
/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nldisp_model_dim(model: *const NldispModel, out: *mut usize) -> NldispStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.grid.dim;
        Ok(())
    })
}

/// Copies node coordinates, row-major with `dim` entries per node.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nldisp_model_nodes(model: *const NldispModel, buf: *mut f64, len: usize) -> NldispStatus {
    guard(|| {
        let m = model_ref(model)?;
        let dst = out_slice(buf, len, m.grid.len() * m.grid.dim)?;
        for (chunk, x) in dst.chunks_mut(m.grid.dim).zip(&m.grid.nodes) {
            chunk.copy_from_slice(x);
        }
        Ok(())
    })
}

/// # Safety
/// Pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nldisp_model_lambda1(model: *const NldispModel, out: *mut f64) -> NldispStatus {
    guard(|| {
        let m = model_ref(model)?;
        *out.as_mut().ok_or_else(|| null("out"))? = m.eig.lambda1;
        Ok(())
    })
}

/// Copies the sup-normalized principal eigenfunction.
///
/// # Safety
/// `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nldisp_model_phi1(model: *const NldispModel, buf: *mut f64, len: usize) -> NldispStatus {
    guard(|| {
        let m = model_ref(model)?;
        out_slice(buf, len, m.eig.phi1.len())?.copy_from_slice(&m.eig.phi1);
        Ok(())
    })
}

/// Traces the positive branch up to `lambda_max` (the configured value when
/// not finite) and stores it on the model.
///
/// # Safety
/// Pointers must be valid; `point_count` may be null.
#[no_mangle]
pub unsafe extern "C" fn nldisp_model_trace(
    model: *mut NldispModel,
    lambda_max: f64,
    point_count: *mut usize,
) -> NldispStatus {
    guard(|| {
        let m = model_mut(model)?;
        let mut cfg = m.continuation.clone();
        if lambda_max.is_finite() {
            cfg.lambda_max = lambda_max;
        }
        let b = trace_branch(&m.problem, &m.eig, &cfg).map_err(fail)?;
        if let Some(out) = point_count.as_mut() {
            *out = b.points.len();
        }
        m.continuation = cfg;
        m.branch = Some(b);
        Ok(())
    })
}

/// Reads point `index` of the stored branch. `u` may be null to skip the state.
///
/// # Safety
/// Pointers must be valid; `u` must hold `len` doubles when not null.
#[no_mangle]
pub unsafe extern "C" fn nldisp_model_branch_point(
    model: *const NldispModel,
    index: usize,
    lambda: *mut f64,
    sup_norm: *mut f64,
    u: *mut f64,
    len: usize,
) -> NldispStatus {
    guard(|| {
        let m = model_ref(model)?;
        let b = m.branch.as_ref().ok_or_else(|| {
            set_error("no branch traced".into());
            NldispStatus::NoBranch
        })?;
        let pt = b.points.get(index).ok_or_else(|| {
            set_error(format!("index {index} out of range ({} points)", b.points.len()));
            NldispStatus::InvalidArgument
        })?;
        *lambda.as_mut().ok_or_else(|| null("lambda"))? = pt.lambda;
        *sup_norm.as_mut().ok_or_else(|| null("sup_norm"))? = pt.sup_norm;
        if !u.is_null() {
            out_slice(u, len, pt.u.len())?.copy_from_slice(&pt.u);
        }
        Ok(())
    })
}

/// Positive solution at `lambda`, interpolated from the stored branch and
/// corrected by Newton; traces to `lambda` first when no branch covers it.
///
/// # Safety
/// `u` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn nldisp_model_solve(
    model: *mut NldispModel,
    lambda: f64,
    u: *mut f64,
    len: usize,
) -> NldispStatus {
    guard(|| {
        let m = model_mut(model)?;
        let dst = out_slice(u, len, m.grid.len())?;
        if lambda.is_nan() || lambda <= m.eig.lambda1 {
            set_error(format!(
                "no positive solution for lambda = {lambda} <= lambda1 = {}",
                m.eig.lambda1
            ));
            return Err(NldispStatus::InvalidArgument);
        }
        let covered = m
            .branch
            .as_ref()
            .and_then(|b| b.monotone_points().last().map(|p| p.lambda >= lambda))
            .unwrap_or(false);
        if !covered {
            let cfg = ContinuationConfig {
                lambda_max: lambda,
                ..m.cfg.continuation.clone()
            };
            m.branch = Some(trace_branch(&m.problem, &m.eig, &cfg).map_err(fail)?);
        }
        let b = m.branch.as_ref().expect("traced");
        let pt = solution_at(&m.problem, b, lambda, &m.continuation).map_err(fail)?;
        dst.copy_from_slice(&pt.u);
        Ok(())
    })
}
