//! C ABI over `shotnoise`.
//!
//! Every function returns a [`ShnStatus`] (or a plain number for the pure
//! arithmetic helpers). On failure the message is kept per thread and can be
//! copied out with [`shn_last_error_message`]. Runs are opaque [`ShnRun`]
//! handles created from a TOML configuration and released with
//! [`shn_run_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use shotnoise::config::{ConfigError, RunConfig};
use shotnoise::estimator::{analyze_moments, BlockAnalysis, GateVerdict, RejectReason};
use shotnoise::keyrate;
use shotnoise::sim::simulate_block_moments;
use shotnoise::trace::Report;

pub const SHN_ABI_VERSION: u32 = 1;

pub const SHN_REJECT_NOISE_FIT_R2: u32 = 1;
pub const SHN_REJECT_RESIDUAL_BUDGET: u32 = 1 << 1;
pub const SHN_REJECT_ATTEN_FIT_R2: u32 = 1 << 2;
pub const SHN_REJECT_FIT_DEGENERATE: u32 = 1 << 3;
pub const SHN_REJECT_SHOT_NONPOSITIVE: u32 = 1 << 4;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShnStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Parse = 3,
    Validation = 4,
    Numeric = 5,
    NotSimulated = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Simulation run: configuration plus, after [`shn_run_simulate`], its
/// analysis.
pub struct ShnRun {
    config: RunConfig,
    analysis: Option<(BlockAnalysis, shotnoise::Thresholds)>,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ShnFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub max_abs_residual: f64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ShnQuadratureVerdict {
    pub accepted: bool,
    pub r2_noise_signal: f64,
    pub r2_signal_atten: f64,
    pub max_residual_snu: f64,
    pub shot_noise_estimate_v2: f64,
    pub excess_noise_slope: f64,
    /// `SHN_REJECT_*` bits.
    pub reject_mask: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ShnBlockVerdict {
    pub accepted: bool,
    pub x: ShnQuadratureVerdict,
    pub p: ShnQuadratureVerdict,
    pub shot_noise_relative_discrepancy: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn fail(status: ShnStatus, msg: impl Into<String>) -> ShnStatus {
    set_error(msg);
    status
}

fn core_status(e: &shotnoise::Error) -> ShnStatus {
    use shotnoise::Error as E;
    match e {
        E::InvalidParam { .. } | E::Unsupported(_) => ShnStatus::Validation,
        E::LengthMismatch { .. } | E::TooFewSamples { .. } => ShnStatus::InvalidArgument,
        _ => ShnStatus::Numeric,
    }
}

fn from_core(e: shotnoise::Error) -> ShnStatus {
    fail(core_status(&e), format!("{}: {e}", e.code()))
}

/// Runs `f`, turning a panic into [`ShnStatus::Panic`].
fn guard(f: impl FnOnce() -> ShnStatus) -> ShnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            fail(ShnStatus::Panic, format!("panic: {msg}"))
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, ShnStatus> {
    if p.is_null() {
        return Err(fail(ShnStatus::NullPointer, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(ShnStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

/// Copies `text` NUL-terminated into `buf`; `needed` receives the size
/// including the terminator.
unsafe fn copy_out(text: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> ShnStatus {
    let size = text.len() + 1;
    if !needed.is_null() {
        *needed = size;
    }
    if buf.is_null() || len < size {
        return fail(ShnStatus::BufferTooSmall, format!("need {size} bytes, got {len}"));
    }
    ptr::copy_nonoverlapping(text.as_ptr(), buf as *mut u8, text.len());
    *buf.add(text.len()) = 0;
    ShnStatus::Ok
}

#[no_mangle]
pub extern "C" fn shn_abi_version() -> u32 {
    SHN_ABI_VERSION
}

/// Length in bytes, without terminator, of this thread's last error message.
#[no_mangle]
pub extern "C" fn shn_last_error_length() -> usize {
    LAST_ERROR.with(|e| e.borrow().len())
}

/// Copies this thread's last error message into `buf`.
///
/// # Safety
/// `buf` must point to `len` writable bytes; `needed` may be null.
#[no_mangle]
pub unsafe extern "C" fn shn_last_error_message(buf: *mut c_char, len: usize, needed: *mut usize) -> ShnStatus {
    let text = LAST_ERROR.with(|e| e.borrow().clone());
    copy_out(&text, buf, len, needed)
}

/// Creates a run from a TOML configuration string.
///
/// # Safety
/// `toml` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shn_run_new(toml: *const c_char, out: *mut *mut ShnRun) -> ShnStatus {
    guard(|| {
        if out.is_null() {
            return fail(ShnStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let text = match str_arg(toml, "toml") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match RunConfig::from_toml_str(text) {
            Ok(config) => {
                *out = Box::into_raw(Box::new(ShnRun { config, analysis: None }));
                ShnStatus::Ok
            }
            Err(ConfigError::Parse(m)) => fail(ShnStatus::Parse, m),
            Err(ConfigError::Invalid(e)) => from_core(e),
            Err(e @ ConfigError::Io { .. }) => fail(ShnStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Creates a run with the honest 16-level default configuration.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shn_run_new_default(out: *mut *mut ShnRun) -> ShnStatus {
    guard(|| {
        if out.is_null() {
            return fail(ShnStatus::NullPointer, "out is null");
        }
        *out = Box::into_raw(Box::new(ShnRun {
            config: RunConfig::honest_default(),
            analysis: None,
        }));
        ShnStatus::Ok
    })
}

/// Releases a run. Null is ignored.
///
/// # Safety
/// `run` must come from `shn_run_new*` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn shn_run_free(run: *mut ShnRun) {
    if !run.is_null() {
        let _ = catch_unwind(AssertUnwindSafe(|| drop(Box::from_raw(run))));
    }
}

unsafe fn run_mut<'a>(run: *mut ShnRun) -> Result<&'a mut ShnRun, ShnStatus> {
    run.as_mut().ok_or_else(|| fail(ShnStatus::NullPointer, "run is null"))
}

unsafe fn run_ref<'a>(run: *const ShnRun) -> Result<&'a ShnRun, ShnStatus> {
    run.as_ref().ok_or_else(|| fail(ShnStatus::NullPointer, "run is null"))
}

/// Replaces the seed and discards any previous result.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn shn_run_set_seed(run: *mut ShnRun, seed: u64) -> ShnStatus {
    guard(|| match run_mut(run) {
        Ok(r) => {
            r.config.system.seed = seed;
            r.analysis = None;
            ShnStatus::Ok
        }
        Err(s) => s,
    })
}

/// Replaces the pulses per group and discards any previous result.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn shn_run_set_n_per_group(run: *mut ShnRun, n: u64) -> ShnStatus {
    guard(|| match run_mut(run) {
        Ok(r) => {
            let Ok(n) = usize::try_from(n) else {
                return fail(ShnStatus::InvalidArgument, "n does not fit in usize");
            };
            let mut c = r.config.clone();
            c.system.n_per_group = n;
            if let Err(e) = c.resolve() {
                return from_core(e);
            }
            r.config = c;
            r.analysis = None;
            ShnStatus::Ok
        }
        Err(s) => s,
    })
}

/// Simulates the block and applies the gate.
///
/// # Safety
/// `run` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn shn_run_simulate(run: *mut ShnRun) -> ShnStatus {
    guard(|| {
        let r = match run_mut(run) {
            Ok(r) => r,
            Err(s) => return s,
        };
        let result = r.config.resolve().and_then(|res| {
            let block = simulate_block_moments(&res.params, &res.schedule, r.config.attack.as_ref())?;
            Ok((analyze_moments(&block, &res.thresholds)?, res.thresholds))
        });
        match result {
            Ok(a) => {
                r.analysis = Some(a);
                ShnStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

fn reject_mask(v: &GateVerdict) -> u32 {
    v.reject_reasons.iter().fold(0, |m, r| {
        m | match r {
            RejectReason::NoiseFitR2 => SHN_REJECT_NOISE_FIT_R2,
            RejectReason::ResidualBudget => SHN_REJECT_RESIDUAL_BUDGET,
            RejectReason::AttenFitR2 => SHN_REJECT_ATTEN_FIT_R2,
            RejectReason::FitDegenerate => SHN_REJECT_FIT_DEGENERATE,
            RejectReason::ShotNonpositive => SHN_REJECT_SHOT_NONPOSITIVE,
        }
    })
}

fn quad(v: &GateVerdict) -> ShnQuadratureVerdict {
    ShnQuadratureVerdict {
        accepted: v.accepted,
        r2_noise_signal: v.r2_noise_signal,
        r2_signal_atten: v.r2_signal_atten,
        max_residual_snu: v.max_residual_snu,
        shot_noise_estimate_v2: v.shot_noise_estimate_v2,
        excess_noise_slope: v.excess_noise_slope,
        reject_mask: reject_mask(v),
    }
}

/// Gate verdict of the last simulation.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shn_run_verdict(run: *const ShnRun, out: *mut ShnBlockVerdict) -> ShnStatus {
    guard(|| {
        let r = match run_ref(run) {
            Ok(r) => r,
            Err(s) => return s,
        };
        let Some(out) = out.as_mut() else {
            return fail(ShnStatus::NullPointer, "out is null");
        };
        let Some((a, _)) = &r.analysis else {
            return fail(ShnStatus::NotSimulated, "call shn_run_simulate first");
        };
        *out = ShnBlockVerdict {
            accepted: a.verdict.accepted,
            x: quad(&a.verdict.x),
            p: quad(&a.verdict.p),
            shot_noise_relative_discrepancy: a.verdict.shot_noise_relative_discrepancy,
        };
        ShnStatus::Ok
    })
}

/// Analysis report of the last simulation as JSON. Call with a null `buf`
/// to learn the size through `needed`.
///
/// # Safety
/// `run` must be a live handle; `buf` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn shn_run_report_json(
    run: *const ShnRun,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> ShnStatus {
    guard(|| {
        let r = match run_ref(run) {
            Ok(r) => r,
            Err(s) => return s,
        };
        let Some((a, t)) = &r.analysis else {
            return fail(ShnStatus::NotSimulated, "call shn_run_simulate first");
        };
        let report = Report::from_analysis(a, *t, Some(r.config.hash_hex()));
        match report.to_json() {
            Ok(text) => copy_out(&text, buf, len, needed),
            Err(e) => fail(ShnStatus::Numeric, e.to_string()),
        }
    })
}

/// Least-squares line through `n` points.
///
/// # Safety
/// `xs` and `ys` must each point to `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shn_fit_affine(xs: *const f64, ys: *const f64, n: usize, out: *mut ShnFit) -> ShnStatus {
    guard(|| {
        if xs.is_null() || ys.is_null() || out.is_null() {
            return fail(ShnStatus::NullPointer, "xs, ys and out must be non-null");
        }
        let xs = std::slice::from_raw_parts(xs, n);
        let ys = std::slice::from_raw_parts(ys, n);
        match shotnoise::fit_affine(xs, ys) {
            Ok(f) => {
                *out = ShnFit {
                    slope: f.slope,
                    intercept: f.intercept,
                    r_squared: f.r_squared,
                    max_abs_residual: f.max_abs_residual,
                };
                ShnStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// `sqrt(2 / n)`.
#[no_mangle]
pub extern "C" fn shn_estimator_sigma(n: u64) -> f64 {
    shotnoise::estimator::estimator_sigma(n)
}

#[no_mangle]
pub extern "C" fn shn_refer_excess_noise_to_alice(xi_bob: f64, length_km: f64, eta: f64) -> f64 {
    keyrate::refer_excess_noise_to_alice(xi_bob, length_km, eta)
}

#[no_mangle]
pub extern "C" fn shn_conservative_xi_bob(measured_slope: f64, slope_margin: f64, signal_var_bob: f64) -> f64 {
    keyrate::conservative_xi_bob(measured_slope, slope_margin, signal_var_bob)
}

#[no_mangle]
pub extern "C" fn shn_modulation_for_snr(snr_target: f64, t_channel: f64, eta: f64, v_el: f64) -> f64 {
    keyrate::modulation_for_snr(snr_target, t_channel, eta, v_el)
}

/// Collective key rate in bits per symbol.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn shn_collective_key_rate(
    v_a: f64,
    t_channel: f64,
    eta: f64,
    v_el: f64,
    xi_alice: f64,
    beta: f64,
    out: *mut f64,
) -> ShnStatus {
    guard(|| {
        let Some(out) = out.as_mut() else {
            return fail(ShnStatus::NullPointer, "out is null");
        };
        match keyrate::collective_key_rate(v_a, t_channel, eta, v_el, xi_alice, beta) {
            Ok(r) => {
                *out = r;
                ShnStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}
