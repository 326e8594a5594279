//! C interface to `arl-core`.
//!
//! Datasets and agents cross the boundary as opaque handles created by an
//! `arl_*_new`/`load`/`generate` call and released with the matching
//! `arl_*_free`. Every fallible call returns an [`ArlStatus`]; the message
//! of the most recent failure on the calling thread is available from
//! [`arl_last_error`] until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;

use arl_core::agents::{train, Agent, AgentSpec, Profile, Variant};
use arl_core::data::Dataset;
use arl_core::envs::{builtin, generate_dataset, Style};
use arl_core::rng::{self, ids};
use arl_core::tabular::{records_jsonl, sweep};
use arl_core::tensor_core::Tensor;
use arl_core::Error;

/// Status codes returned by every fallible function.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArlStatus {
    ArlOk = 0,
    ArlErrConfig = 1,
    ArlErrShape = 2,
    ArlErrUsage = 3,
    ArlErrNumeric = 4,
    ArlErrUnreachable = 5,
    ArlErrFormat = 6,
    ArlErrIo = 7,
    ArlErrUnsupported = 8,
    /// A required pointer argument was null or a string was not UTF-8.
    ArlErrArgument = 9,
    /// The library panicked; the handle arguments may be inconsistent.
    ArlErrPanic = 10,
}

/// Opaque offline dataset.
pub struct ArlDataset(Dataset);

/// Opaque trained agent.
pub struct ArlAgent(Agent);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(e: &Error) -> ArlStatus {
    match e {
        Error::Config(_) => ArlStatus::ArlErrConfig,
        Error::Shape(_) => ArlStatus::ArlErrShape,
        Error::Usage(_) => ArlStatus::ArlErrUsage,
        Error::Numeric { .. } => ArlStatus::ArlErrNumeric,
        Error::Unreachable(_) => ArlStatus::ArlErrUnreachable,
        Error::Format { .. } => ArlStatus::ArlErrFormat,
        Error::Io(_) => ArlStatus::ArlErrIo,
        Error::Unsupported(_) => ArlStatus::ArlErrUnsupported,
    }
}

enum Failure {
    Core(Error),
    Argument(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

type FfiResult<T> = Result<T, Failure>;

fn guard(f: impl FnOnce() -> FfiResult<()>) -> ArlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ArlStatus::ArlOk,
        Ok(Err(Failure::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Argument(m))) => {
            set_error(m);
            ArlStatus::ArlErrArgument
        }
        Err(_) => {
            set_error("internal panic".into());
            ArlStatus::ArlErrPanic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> FfiResult<&'a str> {
    if p.is_null() {
        return Err(Failure::Argument(format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Argument(format!("{what} is not UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> FfiResult<&'a [f64]> {
    if p.is_null() {
        return Err(Failure::Argument(format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a>(p: *mut f64, len: usize, what: &str) -> FfiResult<&'a mut [f64]> {
    if p.is_null() {
        return Err(Failure::Argument(format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> FfiResult<&'a T> {
    p.as_ref().ok_or_else(|| Failure::Argument(format!("{what} is null")))
}

unsafe fn put<T>(out: *mut *mut T, value: T) -> FfiResult<()> {
    if out.is_null() {
        return Err(Failure::Argument("output pointer is null".into()));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

fn check_out<T>(out: *mut *mut T) -> FfiResult<()> {
    if out.is_null() {
        Err(Failure::Argument("output pointer is null".into()))
    } else {
        Ok(())
    }
}

/// Message of the last failure on this thread; empty when none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn arl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn arl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Collects `n` trajectories of `h` steps on the built-in maze `env` with
/// collection `style` ("stitch" or "navigate").
///
/// # Safety
/// `env` and `style` must be NUL-terminated strings; `out` must be a valid
/// pointer to receive the handle.
#[no_mangle]
pub unsafe extern "C" fn arl_dataset_generate(
    env: *const c_char,
    style: *const c_char,
    n: usize,
    h: usize,
    noise: f64,
    seed: u64,
    out: *mut *mut ArlDataset,
) -> ArlStatus {
    guard(|| {
        check_out(out)?;
        let spec = builtin(text(env, "env")?)?;
        let style: Style = text(style, "style")?.parse()?;
        let ds = generate_dataset(&spec, style, n, h, noise, seed)?;
        put(out, ArlDataset(ds))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn arl_dataset_load(path: *const c_char, out: *mut *mut ArlDataset) -> ArlStatus {
    guard(|| {
        check_out(out)?;
        let ds = Dataset::load(&PathBuf::from(text(path, "path")?))?;
        put(out, ArlDataset(ds))
    })
}

/// # Safety
/// `ds` must be a live dataset handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn arl_dataset_save(ds: *const ArlDataset, path: *const c_char) -> ArlStatus {
    guard(|| {
        let ds = handle(ds, "dataset")?;
        ds.0.save(&PathBuf::from(text(path, "path")?))?;
        Ok(())
    })
}

/// Number of transitions; 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn arl_dataset_num_transitions(ds: *const ArlDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.num_transitions())
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn arl_dataset_free(ds: *mut ArlDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Trains a `variant` agent ("iql", "hiql1vr", "hiql2v", "hiql2vr",
/// "arli", "arle") with the hyperparameters of `profile` ("desk",
/// "pointmaze", "manipulation") for `steps` gradient steps.
///
/// # Safety
/// `ds` must be a live dataset handle, `variant` and `profile`
/// NUL-terminated strings and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn arl_agent_train(
    ds: *const ArlDataset,
    variant: *const c_char,
    profile: *const c_char,
    steps: usize,
    seed: u64,
    out: *mut *mut ArlAgent,
) -> ArlStatus {
    guard(|| {
        check_out(out)?;
        let ds = handle(ds, "dataset")?;
        let variant: Variant = text(variant, "variant")?.parse()?;
        let profile: Profile = text(profile, "profile")?.parse()?;
        let mut spec = AgentSpec::preset(variant, profile);
        spec.discrete = !builtin(&ds.0.env_id)?.continuous;
        let res = train(&spec, &ds.0, steps, seed)?;
        if let Some(e) = res.aborted {
            return Err(e.into());
        }
        put(out, ArlAgent(res.agent))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn arl_agent_load(path: *const c_char, out: *mut *mut ArlAgent) -> ArlStatus {
    guard(|| {
        check_out(out)?;
        let agent = Agent::load(&PathBuf::from(text(path, "path")?))?;
        put(out, ArlAgent(agent))
    })
}

/// # Safety
/// `agent` must be a live agent handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn arl_agent_save(agent: *const ArlAgent, path: *const c_char) -> ArlStatus {
    guard(|| {
        let a = handle(agent, "agent")?;
        a.0.save(&PathBuf::from(text(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `agent` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn arl_agent_free(agent: *mut ArlAgent) {
    if !agent.is_null() {
        drop(Box::from_raw(agent));
    }
}

/// State dimension; 0 for a null handle.
///
/// # Safety
/// `agent` must be null or a live agent handle.
#[no_mangle]
pub unsafe extern "C" fn arl_agent_state_dim(agent: *const ArlAgent) -> usize {
    agent.as_ref().map_or(0, |a| a.0.state_dim())
}

/// Action dimension; 0 for a null handle.
///
/// # Safety
/// `agent` must be null or a live agent handle.
#[no_mangle]
pub unsafe extern "C" fn arl_agent_action_dim(agent: *const ArlAgent) -> usize {
    agent.as_ref().map_or(0, |a| a.0.action_dim())
}

/// Writes the action for state `s` and goal `g` (both `state_dim` long)
/// into `action` (`action_len` must equal the action dimension).
/// Stochastic actions draw from a stream seeded by `seed`.
///
/// # Safety
/// Pointers must reference arrays of the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn arl_agent_act(
    agent: *const ArlAgent,
    s: *const f64,
    g: *const f64,
    state_dim: usize,
    deterministic: bool,
    seed: u64,
    action: *mut f64,
    action_len: usize,
) -> ArlStatus {
    guard(|| {
        let a = handle(agent, "agent")?;
        if state_dim != a.0.state_dim() || action_len != a.0.action_dim() {
            return Err(Error::shape(format!(
                "agent takes states of length {} and actions of length {}",
                a.0.state_dim(),
                a.0.action_dim()
            ))
            .into());
        }
        let s = slice(s, state_dim, "s")?;
        let g = slice(g, state_dim, "g")?;
        let out = slice_mut(action, action_len, "action")?;
        let mut rng = rng::stream(seed, ids::EVAL_POLICY);
        let act = a.0.act(s, g, deterministic, &mut rng)?;
        out.copy_from_slice(&act.action);
        Ok(())
    })
}

/// Low-level values `V_l(s_i, gs_i)` for `rows` row-major pairs.
///
/// # Safety
/// `s` and `gs` must hold `rows * state_dim` values and `out` `rows`.
#[no_mangle]
pub unsafe extern "C" fn arl_agent_low_value(
    agent: *const ArlAgent,
    s: *const f64,
    gs: *const f64,
    rows: usize,
    out: *mut f64,
) -> ArlStatus {
    guard(|| {
        let a = handle(agent, "agent")?;
        let d = a.0.state_dim();
        let st = Tensor::matrix(rows, d, slice(s, rows * d, "s")?.to_vec())?;
        let gt = Tensor::matrix(rows, d, slice(gs, rows * d, "gs")?.to_vec())?;
        let v = a.0.low_value(&st, &gt)?;
        slice_mut(out, rows, "out")?.copy_from_slice(v.data());
        Ok(())
    })
}

/// Runs the finite-MDP sweep and returns one JSON record per line in a
/// string released with [`arl_string_free`].
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn arl_tabular_sweep(
    instances: usize,
    max_states: usize,
    seed: u64,
    out: *mut *mut c_char,
) -> ArlStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Argument("output pointer is null".into()));
        }
        let records = sweep(instances, max_states, seed)?;
        let text = records_jsonl(&records)?;
        *out = CString::new(text).expect("JSON has no NUL bytes").into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn arl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
