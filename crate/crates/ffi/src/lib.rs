//! C ABI over `rsma_mc`.
//!
//! Every fallible call returns an [`RsmaStatus`] and writes its result
//! through an out pointer. On failure a message is kept per thread and can be
//! read with [`rsma_last_error_message`]. Handles are opaque and must be
//! released with the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use rsma_mc::baselines::{self, TdmError, TdmScheme};
use rsma_mc::config::load_config;
use rsma_mc::experiments::{hc_intercept, Scheme};
use rsma_mc::fblrate::{fbl_rate, q_inverse, FblParams};
use rsma_mc::model::{ArrivalRates, Blocklength, ServiceRates, SystemConfig};
use rsma_mc::scasolver::{solve_mc_rsma, Objective, ScaError, SolveOptions, SolveStatus};

/// Rate-splitting with multi-connectivity.
pub const RSMA_SCHEME_MC_RSMA: u32 = 0;
/// Time division, both APs decode.
pub const RSMA_SCHEME_MC_TDM: u32 = 1;
/// Time division, each UE served by its own AP.
pub const RSMA_SCHEME_SC_TDM: u32 = 2;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RsmaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Infeasible = 4,
    Solver = 5,
    Panic = 6,
}

/// System configuration.
pub struct RsmaConfig {
    inner: SystemConfig,
}

/// Power allocation and service rates for one operating point.
pub struct RsmaAllocation {
    pc: [f64; 2],
    pp: [f64; 2],
    service: ServiceRates,
    objective: f64,
    iterations: u32,
    converged: bool,
    alpha: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let mut s = msg.into();
    s.retain(|c| c != '\0');
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(CString::new(s).unwrap_or_default()));
}

fn fail(status: RsmaStatus, msg: impl Into<String>) -> RsmaStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> RsmaStatus) -> RsmaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(RsmaStatus::Panic, "internal panic"),
    }
}

/// Message for the last failed call on this thread, or NULL. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn rsma_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Symmetric setup: unit direct gains and noise, `cross_gain` off the
/// diagonal, transmit power `snr_db` above the noise.
///
/// # Safety
/// `out` must be a valid pointer to writable storage.
#[no_mangle]
pub unsafe extern "C" fn rsma_config_symmetric(snr_db: f64, cross_gain: f64, out: *mut *mut RsmaConfig) -> RsmaStatus {
    guard(|| {
        if out.is_null() {
            return fail(RsmaStatus::NullPointer, "out is null");
        }
        match SystemConfig::symmetric(snr_db, cross_gain) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(RsmaConfig { inner }));
                RsmaStatus::Ok
            }
            Err(e) => fail(RsmaStatus::Config, e.to_string()),
        }
    })
}

/// Load a `key = value` configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rsma_config_from_file(
    path: *const c_char,
    allow_short_blocklength: bool,
    out: *mut *mut RsmaConfig,
) -> RsmaStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return fail(RsmaStatus::NullPointer, "path or out is null");
        }
        let Ok(p) = CStr::from_ptr(path).to_str() else {
            return fail(RsmaStatus::InvalidArgument, "path is not UTF-8");
        };
        match load_config(Path::new(p), allow_short_blocklength) {
            Ok(inner) => {
                *out = Box::into_raw(Box::new(RsmaConfig { inner }));
                RsmaStatus::Ok
            }
            Err(e) => fail(RsmaStatus::Config, e.to_string()),
        }
    })
}

/// # Safety
/// `cfg` must come from an `rsma_config_*` constructor, or be NULL.
#[no_mangle]
pub unsafe extern "C" fn rsma_config_free(cfg: *mut RsmaConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

fn scheme_from(code: u32) -> Option<Scheme> {
    match code {
        RSMA_SCHEME_MC_RSMA => Some(Scheme::McRsma),
        RSMA_SCHEME_MC_TDM => Some(Scheme::McTdm),
        RSMA_SCHEME_SC_TDM => Some(Scheme::ScTdm),
        _ => None,
    }
}

fn solve_point(scheme: Scheme, a: &ArrivalRates, cfg: &SystemConfig) -> Result<RsmaAllocation, RsmaStatus> {
    let obj = Objective::MaxMinPrivate;
    match scheme {
        Scheme::McRsma => match solve_mc_rsma(a, obj, cfg, &SolveOptions::default()) {
            Ok(r) => Ok(RsmaAllocation {
                pc: r.power.pc,
                pp: r.power.pp,
                service: ServiceRates::from_rates(&r.rates, cfg),
                objective: r.objective,
                iterations: r.iterations.len() as u32,
                converged: r.status == SolveStatus::Converged,
                alpha: f64::NAN,
            }),
            Err(ScaError::Infeasible) => Err(fail(RsmaStatus::Infeasible, ScaError::Infeasible.to_string())),
            Err(e) => Err(fail(RsmaStatus::Solver, e.to_string())),
        },
        Scheme::McTdm | Scheme::ScTdm => {
            let kind = if scheme == Scheme::McTdm {
                TdmScheme::MultiConnectivity
            } else {
                TdmScheme::SingleConnectivity
            };
            match baselines::solve(kind, a, obj, cfg) {
                Ok(s) => Ok(RsmaAllocation {
                    pc: s.hc_powers.pc,
                    pp: s.lc_powers.pp,
                    service: s.effective_service,
                    objective: s.objective,
                    iterations: 0,
                    converged: true,
                    alpha: s.alpha,
                }),
                Err(TdmError::Infeasible) => Err(fail(RsmaStatus::Infeasible, TdmError::Infeasible.to_string())),
                Err(e) => Err(fail(RsmaStatus::Solver, e.to_string())),
            }
        }
    }
}

/// Max-min LC allocation for per-UE arrivals `a_hc[2]` and `a_lc[2]` in
/// packets/slot.
///
/// # Safety
/// `cfg` must be a live handle, `a_hc` and `a_lc` must point to two doubles
/// each and `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rsma_solve(
    cfg: *const RsmaConfig,
    scheme: u32,
    a_hc: *const f64,
    a_lc: *const f64,
    out: *mut *mut RsmaAllocation,
) -> RsmaStatus {
    guard(|| {
        if cfg.is_null() || a_hc.is_null() || a_lc.is_null() || out.is_null() {
            return fail(RsmaStatus::NullPointer, "null argument");
        }
        let Some(scheme) = scheme_from(scheme) else {
            return fail(RsmaStatus::InvalidArgument, format!("unknown scheme {scheme}"));
        };
        let hc = [*a_hc, *a_hc.add(1)];
        let lc = [*a_lc, *a_lc.add(1)];
        let arrivals = match ArrivalRates::new(hc, lc) {
            Ok(a) => a,
            Err(e) => return fail(RsmaStatus::InvalidArgument, e.to_string()),
        };
        match solve_point(scheme, &arrivals, &(*cfg).inner) {
            Ok(alloc) => {
                *out = Box::into_raw(Box::new(alloc));
                RsmaStatus::Ok
            }
            Err(s) => s,
        }
    })
}

/// # Safety
/// `alloc` must come from [`rsma_solve`], or be NULL.
#[no_mangle]
pub unsafe extern "C" fn rsma_allocation_free(alloc: *mut RsmaAllocation) {
    if !alloc.is_null() {
        drop(Box::from_raw(alloc));
    }
}

/// Common and private powers per UE. For the time-division schemes `pc`
/// holds the HC-phase powers and `pp` the LC-phase powers.
///
/// # Safety
/// `alloc` must be live; `pc` and `pp` must each hold two doubles.
#[no_mangle]
pub unsafe extern "C" fn rsma_allocation_powers(alloc: *const RsmaAllocation, pc: *mut f64, pp: *mut f64) -> RsmaStatus {
    if alloc.is_null() || pc.is_null() || pp.is_null() {
        return fail(RsmaStatus::NullPointer, "null argument");
    }
    let a = &*alloc;
    ptr::copy_nonoverlapping(a.pc.as_ptr(), pc, 2);
    ptr::copy_nonoverlapping(a.pp.as_ptr(), pp, 2);
    RsmaStatus::Ok
}

/// HC and LC service per UE in packets/slot.
///
/// # Safety
/// `alloc` must be live; `hc` and `lc` must each hold two doubles.
#[no_mangle]
pub unsafe extern "C" fn rsma_allocation_service(alloc: *const RsmaAllocation, hc: *mut f64, lc: *mut f64) -> RsmaStatus {
    if alloc.is_null() || hc.is_null() || lc.is_null() {
        return fail(RsmaStatus::NullPointer, "null argument");
    }
    let a = &*alloc;
    ptr::copy_nonoverlapping(a.service.hc.as_ptr(), hc, 2);
    ptr::copy_nonoverlapping(a.service.lc.as_ptr(), lc, 2);
    RsmaStatus::Ok
}

/// Max-min LC rate in bits/s; NaN for a NULL handle.
///
/// # Safety
/// `alloc` must be live or NULL.
#[no_mangle]
pub unsafe extern "C" fn rsma_allocation_objective(alloc: *const RsmaAllocation) -> f64 {
    alloc.as_ref().map_or(f64::NAN, |a| a.objective)
}

/// SCA iterations; 0 for the time-division schemes.
///
/// # Safety
/// `alloc` must be live or NULL.
#[no_mangle]
pub unsafe extern "C" fn rsma_allocation_iterations(alloc: *const RsmaAllocation) -> u32 {
    alloc.as_ref().map_or(0, |a| a.iterations)
}

/// # Safety
/// `alloc` must be live or NULL.
#[no_mangle]
pub unsafe extern "C" fn rsma_allocation_converged(alloc: *const RsmaAllocation) -> bool {
    alloc.as_ref().is_some_and(|a| a.converged)
}

/// HC time share of a time-division allocation; NaN for rate-splitting.
///
/// # Safety
/// `alloc` must be live or NULL.
#[no_mangle]
pub unsafe extern "C" fn rsma_allocation_alpha(alloc: *const RsmaAllocation) -> f64 {
    alloc.as_ref().map_or(f64::NAN, |a| a.alpha)
}

/// Largest symmetric HC load with any feasible allocation, packets/slot.
///
/// # Safety
/// `cfg` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn rsma_hc_intercept(cfg: *const RsmaConfig, scheme: u32, tol: f64, out: *mut f64) -> RsmaStatus {
    guard(|| {
        if cfg.is_null() || out.is_null() {
            return fail(RsmaStatus::NullPointer, "null argument");
        }
        let Some(scheme) = scheme_from(scheme) else {
            return fail(RsmaStatus::InvalidArgument, format!("unknown scheme {scheme}"));
        };
        if !(tol > 0.0) {
            return fail(RsmaStatus::InvalidArgument, "tol must be positive");
        }
        match hc_intercept(scheme, &(*cfg).inner, tol) {
            Some(v) => {
                *out = v;
                RsmaStatus::Ok
            }
            None => fail(RsmaStatus::Infeasible, "no HC load is feasible"),
        }
    })
}

/// Inverse Gaussian tail function.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rsma_q_inverse(p: f64, out: *mut f64) -> RsmaStatus {
    if out.is_null() {
        return fail(RsmaStatus::NullPointer, "out is null");
    }
    match q_inverse(p) {
        Ok(v) => {
            *out = v;
            RsmaStatus::Ok
        }
        Err(e) => fail(RsmaStatus::InvalidArgument, e.to_string()),
    }
}

/// Finite-blocklength rate in bits/s at SINR `gamma`. A `blocklength` of 0
/// selects the Shannon rate.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rsma_fbl_rate(
    gamma: f64,
    epsilon: f64,
    blocklength: u32,
    bandwidth_hz: f64,
    out: *mut f64,
) -> RsmaStatus {
    if out.is_null() {
        return fail(RsmaStatus::NullPointer, "out is null");
    }
    if !(gamma >= 0.0) {
        return fail(RsmaStatus::InvalidArgument, format!("SINR must be non-negative, got {gamma}"));
    }
    let l = if blocklength == 0 {
        Blocklength::Infinite
    } else {
        Blocklength::Finite(blocklength)
    };
    match FblParams::new(epsilon, l, bandwidth_hz) {
        Ok(p) => {
            *out = fbl_rate(gamma, &p);
            RsmaStatus::Ok
        }
        Err(e) => fail(RsmaStatus::InvalidArgument, e.to_string()),
    }
}
