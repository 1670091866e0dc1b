//! C ABI over `tandem-fusion`.
//!
//! Every fallible call returns a [`TfStatus`]; on failure the message is
//! available from [`tf_last_error_message`] on the same thread. Models are
//! opaque handles created by [`tf_model_new`] and released by
//! [`tf_model_free`]. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use tandem_fusion::asymptotic::{maximize_kl_xyx, maximize_kl_yx};
use tandem_fusion::fixed_sample::{
    centralized, evaluate_xyx, evaluate_yx, optimize_xyx, optimize_yx, OperatingPoint, Rates,
    XyxThresholds, YxThresholds,
};
use tandem_fusion::gaussian_model::q_tail;
use tandem_fusion::montecarlo::{simulate_fixed, McEstimate, Scenario};
use tandem_fusion::search::{IterConfig, SearchConfig};
use tandem_fusion::{FusionError, GaussianModel};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Ordering = 3,
    NonConvergence = 4,
    Bracket = 5,
    CapExceeded = 6,
    Panic = 7,
}

/// Opaque two-sensor model.
pub struct TfModel {
    model: GaussianModel,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TfYxThresholds {
    pub t_v: f64,
    pub t_w: [f64; 2],
}

/// `t_w[v][u]`.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TfXyxThresholds {
    pub t_u: f64,
    pub t_v: [f64; 2],
    pub t_w: [[f64; 2]; 2],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TfOperatingPoint {
    pub pf: f64,
    pub pd: f64,
    pub lambda: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TfRates {
    pub pf: f64,
    pub pd: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TfEstimate {
    pub value: f64,
    pub half_width: f64,
    pub trials: u64,
    pub seed: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn status_of(err: &FusionError) -> TfStatus {
    match err {
        FusionError::Ordering(_) => TfStatus::Ordering,
        FusionError::NonConvergence { .. } => TfStatus::NonConvergence,
        FusionError::Bracket { .. } => TfStatus::Bracket,
        FusionError::CapExceeded(_) => TfStatus::CapExceeded,
        _ => TfStatus::InvalidArgument,
    }
}

/// Run `f`, recording any error or panic for `tf_last_error_message`.
fn guard<F: FnOnce() -> Result<(), TfStatus>>(f: F) -> TfStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TfStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            TfStatus::Panic
        }
    }
}

fn check<T>(r: tandem_fusion::Result<T>) -> Result<T, TfStatus> {
    r.map_err(|e| {
        set_error(&e.to_string());
        status_of(&e)
    })
}

unsafe fn model_ref<'a>(p: *const TfModel) -> Result<&'a GaussianModel, TfStatus> {
    match p.as_ref() {
        Some(m) => Ok(&m.model),
        None => Err(null("model")),
    }
}

unsafe fn out_mut<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, TfStatus> {
    p.as_mut().ok_or_else(|| null(name))
}

unsafe fn in_ref<'a, T>(p: *const T, name: &str) -> Result<&'a T, TfStatus> {
    p.as_ref().ok_or_else(|| null(name))
}

fn null(name: &str) -> TfStatus {
    set_error(&format!("{name} is a null pointer"));
    TfStatus::NullPointer
}

fn point(p: OperatingPoint) -> TfOperatingPoint {
    TfOperatingPoint { pf: p.pf, pd: p.pd, lambda: p.lambda }
}

fn rates(r: Rates) -> TfRates {
    TfRates { pf: r.pf, pd: r.pd }
}

fn estimate(e: McEstimate) -> TfEstimate {
    TfEstimate { value: e.value, half_width: e.half_width, trials: e.trials, seed: e.seed }
}

fn yx(t: &TfYxThresholds) -> YxThresholds {
    YxThresholds { t_v: t.t_v, t_w: t.t_w }
}

fn xyx(t: &TfXyxThresholds) -> XyxThresholds {
    XyxThresholds { t_u: t.t_u, t_v: t.t_v, t_w: t.t_w }
}

/// Create a model with noise deviations `sigma_x`, `sigma_y`.
///
/// # Safety
/// `out` must be null or valid for one pointer write.
#[no_mangle]
pub unsafe extern "C" fn tf_model_new(sigma_x: f64, sigma_y: f64, out: *mut *mut TfModel) -> TfStatus {
    guard(|| {
        let out = out_mut(out, "out")?;
        let model = check(GaussianModel::new(sigma_x, sigma_y))?;
        *out = Box::into_raw(Box::new(TfModel { model }));
        Ok(())
    })
}

/// Release a model. Null is ignored.
///
/// # Safety
/// `model` must be null or come from `tf_model_new` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn tf_model_free(model: *mut TfModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Gaussian tail `Q(z) = P(N(0,1) > z)`.
#[no_mangle]
pub extern "C" fn tf_q_tail(z: f64) -> f64 {
    q_tail(z)
}

/// Neyman-Pearson optimal one-way design at false-alarm rate `alpha`.
///
/// # Safety
/// Pointers must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn tf_optimize_yx(
    model: *const TfModel,
    alpha: f64,
    thresholds: *mut TfYxThresholds,
    op: *mut TfOperatingPoint,
) -> TfStatus {
    guard(|| {
        let m = model_ref(model)?;
        let (thr_out, op_out) = (out_mut(thresholds, "thresholds")?, out_mut(op, "op")?);
        let d = check(optimize_yx(m, alpha, &SearchConfig::default(), &IterConfig::default()))?;
        *thr_out = TfYxThresholds { t_v: d.thresholds.t_v, t_w: d.thresholds.t_w };
        *op_out = point(d.point);
        Ok(())
    })
}

/// Neyman-Pearson optimal interactive design at false-alarm rate `alpha`.
///
/// # Safety
/// Pointers must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn tf_optimize_xyx(
    model: *const TfModel,
    alpha: f64,
    thresholds: *mut TfXyxThresholds,
    op: *mut TfOperatingPoint,
) -> TfStatus {
    guard(|| {
        let m = model_ref(model)?;
        let (thr_out, op_out) = (out_mut(thresholds, "thresholds")?, out_mut(op, "op")?);
        let d = check(optimize_xyx(m, alpha, &SearchConfig::default(), &IterConfig::default()))?;
        let t = d.thresholds;
        *thr_out = TfXyxThresholds { t_u: t.t_u, t_v: t.t_v, t_w: t.t_w };
        *op_out = point(d.point);
        Ok(())
    })
}

/// Centralized detector with both observations at one site.
///
/// # Safety
/// Pointers must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn tf_centralized(model: *const TfModel, alpha: f64, op: *mut TfOperatingPoint) -> TfStatus {
    guard(|| {
        let m = model_ref(model)?;
        let op = out_mut(op, "op")?;
        *op = point(check(centralized(m, alpha))?);
        Ok(())
    })
}

/// Largest KL exponents of the one-way and interactive processes and the
/// maximizing Y threshold of the one-way process.
///
/// # Safety
/// Pointers must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn tf_kl_max(
    model: *const TfModel,
    k_yx: *mut f64,
    k_xyx: *mut f64,
    t_star: *mut f64,
) -> TfStatus {
    guard(|| {
        let m = model_ref(model)?;
        let (a, b, c) = (out_mut(k_yx, "k_yx")?, out_mut(k_xyx, "k_xyx")?, out_mut(t_star, "t_star")?);
        let r = maximize_kl_yx(m);
        let (_, k) = check(maximize_kl_xyx(m, &SearchConfig::default()))?;
        *a = r.k_total;
        *b = k;
        *c = r.t_star;
        Ok(())
    })
}

/// # Safety
/// Pointers must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn tf_evaluate_yx(
    model: *const TfModel,
    thresholds: *const TfYxThresholds,
    out: *mut TfRates,
) -> TfStatus {
    guard(|| {
        let m = model_ref(model)?;
        let t = in_ref(thresholds, "thresholds")?;
        let out = out_mut(out, "out")?;
        *out = rates(evaluate_yx(m, &yx(t)));
        Ok(())
    })
}

/// # Safety
/// Pointers must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn tf_evaluate_xyx(
    model: *const TfModel,
    thresholds: *const TfXyxThresholds,
    out: *mut TfRates,
) -> TfStatus {
    guard(|| {
        let m = model_ref(model)?;
        let t = in_ref(thresholds, "thresholds")?;
        let out = out_mut(out, "out")?;
        *out = rates(check(evaluate_xyx(m, &xyx(t)))?);
        Ok(())
    })
}

unsafe fn simulate(
    scenario: Scenario,
    trials: u64,
    seed: u64,
    pf: *mut TfEstimate,
    pd: *mut TfEstimate,
) -> Result<(), TfStatus> {
    let (pf, pd) = (out_mut(pf, "pf")?, out_mut(pd, "pd")?);
    let (a, b) = check(simulate_fixed(&scenario, trials, seed))?;
    *pf = estimate(a);
    *pd = estimate(b);
    Ok(())
}

/// Monte-Carlo `(pf, pd)` of a one-way design.
///
/// # Safety
/// Pointers must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn tf_simulate_yx(
    model: *const TfModel,
    thresholds: *const TfYxThresholds,
    trials: u64,
    seed: u64,
    pf: *mut TfEstimate,
    pd: *mut TfEstimate,
) -> TfStatus {
    guard(|| {
        let m = model_ref(model)?;
        let t = in_ref(thresholds, "thresholds")?;
        simulate(Scenario::Yx(*m, yx(t)), trials, seed, pf, pd)
    })
}

/// Monte-Carlo `(pf, pd)` of an interactive design.
///
/// # Safety
/// Pointers must be null or valid.
#[no_mangle]
pub unsafe extern "C" fn tf_simulate_xyx(
    model: *const TfModel,
    thresholds: *const TfXyxThresholds,
    trials: u64,
    seed: u64,
    pf: *mut TfEstimate,
    pd: *mut TfEstimate,
) -> TfStatus {
    guard(|| {
        let m = model_ref(model)?;
        let t = in_ref(thresholds, "thresholds")?;
        simulate(Scenario::Xyx(*m, xyx(t)), trials, seed, pf, pd)
    })
}

/// Message of the last failed call on this thread, empty after a success.
/// Valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn tf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Library version, a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tf_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
