//! C ABI over `pvqueue`.
//!
//! Every function returns a [`PvqStatus`]; on failure the message is available
//! from [`pvq_last_error`] on the same thread. Handles are opaque and must be
//! released with their matching `*_free` function. No function panics across
//! the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pvqueue::distributions::{queue_pmf_time_vector, QueueObservation, QueueObservationNoTime};
use pvqueue::estimators::{
    hcm_delay_queue, np_est1, np_est2, param_est1, param_est2, q_back, Estimate, HcmConfig, ProbeHistory,
    SignalCycle,
};
use pvqueue::evaluation::{ingest_csv, run_evaluation, EvalReport, RunConfig};
use pvqueue::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PvqStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    HistoryRequired = 3,
    NoProbes = 4,
    Oversaturated = 5,
    DivisionGuard = 6,
    Io = 7,
    Parse = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Expected queue and, when `has_variance` is set, its variance.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PvqEstimate {
    pub mean: f64,
    pub variance: f64,
    pub has_variance: bool,
}

/// Opaque per-lane probe history.
pub struct PvqHistory(ProbeHistory);

/// Opaque evaluation report.
pub struct PvqReport(EvalReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(err: &Error) -> PvqStatus {
    match err {
        Error::HistoryRequired => PvqStatus::HistoryRequired,
        Error::NoProbes => PvqStatus::NoProbes,
        Error::Oversaturated { .. } => PvqStatus::Oversaturated,
        Error::DivisionGuard(_) => PvqStatus::DivisionGuard,
        Error::Io(_) => PvqStatus::Io,
        Error::Parse { .. } | Error::Csv(_) | Error::Json(_) => PvqStatus::Parse,
        _ => PvqStatus::InvalidArgument,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (PvqStatus, String)>) -> PvqStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PvqStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PvqStatus::Panic
        }
    }
}

fn lift<T>(r: pvqueue::Result<T>) -> Result<T, (PvqStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(name: &str) -> (PvqStatus, String) {
    (PvqStatus::NullPointer, format!("{name} is null"))
}

fn write_estimate(out: *mut PvqEstimate, e: Estimate) -> Result<(), (PvqStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    let value = PvqEstimate { mean: e.mean, variance: e.variance.unwrap_or(0.0), has_variance: e.variance.is_some() };
    // SAFETY: checked non-null; caller guarantees it points to a writable PvqEstimate.
    unsafe { out.write(value) };
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn pvq_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Time-conditioned nonparametric estimate for `m <= l <= 2t`, `t <= red`.
#[no_mangle]
pub extern "C" fn pvq_np_est1(l: u32, m: u32, t: u32, red: u32, out: *mut PvqEstimate) -> PvqStatus {
    guard(|| {
        let obs = lift(QueueObservation::new(l, m, t, red))?;
        write_estimate(out, np_est1(&obs))
    })
}

/// Nonparametric estimate conditioned on `(l, m)` with at most `cmax` arrivals.
#[no_mangle]
pub extern "C" fn pvq_np_est2(l: u32, m: u32, cmax: u32, out: *mut PvqEstimate) -> PvqStatus {
    guard(|| {
        let obs = lift(QueueObservationNoTime::new(l, m, cmax))?;
        write_estimate(out, np_est2(&obs))
    })
}

#[no_mangle]
pub extern "C" fn pvq_history_new() -> *mut PvqHistory {
    Box::into_raw(Box::new(PvqHistory(ProbeHistory::new())))
}

/// # Safety
/// `history` must be null or come from [`pvq_history_new`] and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pvq_history_free(history: *mut PvqHistory) {
    if !history.is_null() {
        drop(Box::from_raw(history));
    }
}

/// # Safety
/// `history` must be a live handle from [`pvq_history_new`].
#[no_mangle]
pub unsafe extern "C" fn pvq_history_record(history: *mut PvqHistory, l: u32, m: u32, t: u32, red: u32) -> PvqStatus {
    guard(|| {
        let h = history.as_mut().ok_or_else(|| null("history"))?;
        let obs = lift(QueueObservation::new(l, m, t, red))?;
        h.0.record(&obs);
        Ok(())
    })
}

/// # Safety
/// `history` must be a live handle from [`pvq_history_new`].
#[no_mangle]
pub unsafe extern "C" fn pvq_param_est1(
    l: u32,
    m: u32,
    t: u32,
    red: u32,
    history: *const PvqHistory,
    out: *mut PvqEstimate,
) -> PvqStatus {
    guard(|| {
        let h = history.as_ref().ok_or_else(|| null("history"))?;
        let obs = lift(QueueObservation::new(l, m, t, red))?;
        write_estimate(out, lift(param_est1(&obs, &h.0))?)
    })
}

/// # Safety
/// `history` must be a live handle from [`pvq_history_new`].
#[no_mangle]
pub unsafe extern "C" fn pvq_param_est2(
    l: u32,
    m: u32,
    t: u32,
    red: u32,
    history: *const PvqHistory,
    out: *mut PvqEstimate,
) -> PvqStatus {
    guard(|| {
        let h = history.as_ref().ok_or_else(|| null("history"))?;
        let obs = lift(QueueObservation::new(l, m, t, red))?;
        write_estimate(out, lift(param_est2(&obs, &h.0))?)
    })
}

/// Back-of-queue estimate; `saturation_flow` in vehicles per second.
#[no_mangle]
pub extern "C" fn pvq_q_back(lambda: f64, red: f64, saturation_flow: f64, out: *mut PvqEstimate) -> PvqStatus {
    guard(|| write_estimate(out, lift(q_back(lambda, red, saturation_flow))?))
}

/// Delay-based queue with the default delay parameters.
#[no_mangle]
pub extern "C" fn pvq_hcm_delay_queue(cycle: f64, red: f64, lambda: f64, out: *mut PvqEstimate) -> PvqStatus {
    guard(|| {
        let c = lift(SignalCycle::new(cycle, red))?;
        write_estimate(out, lift(hcm_delay_queue(&c, lambda, &HcmConfig::default()))?)
    })
}

/// Writes `P(n)` for `n = *first, *first + 1, ...` into `probs`. `*len` always
/// receives the support size; `PVQ_STATUS_BUFFER_TOO_SMALL` is returned when it
/// exceeds `capacity` (nothing else is written).
///
/// # Safety
/// `probs` must be valid for `capacity` writes; `first` and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pvq_queue_pmf_time(
    l: u32,
    m: u32,
    t: u32,
    red: u32,
    probs: *mut f64,
    capacity: usize,
    first: *mut u64,
    len: *mut usize,
) -> PvqStatus {
    guard(|| {
        if first.is_null() || len.is_null() {
            return Err(null("first/len"));
        }
        let obs = lift(QueueObservation::new(l, m, t, red))?;
        let pmf = queue_pmf_time_vector(&obs).to_f64();
        len.write(pmf.len());
        if pmf.len() > capacity {
            return Err((PvqStatus::BufferTooSmall, format!("need {} slots, have {capacity}", pmf.len())));
        }
        if probs.is_null() {
            return Err(null("probs"));
        }
        first.write(pmf[0].0);
        for (i, (_, p)) in pmf.iter().enumerate() {
            probs.add(i).write(*p);
        }
        Ok(())
    })
}

/// Runs the default evaluation on a cycle CSV file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pvq_evaluate_csv(
    path: *const c_char,
    seeds: u32,
    base_seed: u64,
    out: *mut *mut PvqReport,
) -> PvqStatus {
    guard(|| {
        if path.is_null() || out.is_null() {
            return Err(null("path/out"));
        }
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|e| (PvqStatus::InvalidArgument, format!("path is not UTF-8: {e}")))?;
        let records = lift(ingest_csv(path))?;
        let cfg = RunConfig { seeds, base_seed, ..RunConfig::default() };
        let report = lift(run_evaluation(&records, &cfg))?;
        out.write(Box::into_raw(Box::new(PvqReport(report))));
        Ok(())
    })
}

/// Number of (day, lane, estimator) cells, or 0 for a null handle.
///
/// # Safety
/// `report` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pvq_report_cell_count(report: *const PvqReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.cells.len())
}

/// Serializes the report as JSON; release the string with [`pvq_string_free`].
///
/// # Safety
/// `report` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pvq_report_to_json(report: *const PvqReport, out: *mut *mut c_char) -> PvqStatus {
    guard(|| {
        let r = report.as_ref().ok_or_else(|| null("report"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let json = lift(serde_json_string(&r.0))?;
        let c = CString::new(json).map_err(|e| (PvqStatus::Parse, e.to_string()))?;
        out.write(c.into_raw());
        Ok(())
    })
}

fn serde_json_string(report: &EvalReport) -> pvqueue::Result<String> {
    let mut buf = Vec::new();
    pvqueue::evaluation::write_report(report, pvqueue::evaluation::ReportFormat::Json, &mut buf)?;
    Ok(String::from_utf8(buf).expect("JSON output is UTF-8"))
}

/// # Safety
/// `report` must be null or a live handle, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn pvq_report_free(report: *mut PvqReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// # Safety
/// `s` must be null or a string returned by this library, freed at most once.
#[no_mangle]
pub unsafe extern "C" fn pvq_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
