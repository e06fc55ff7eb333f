//! C ABI for the `irsa` crate.
//!
//! Objects cross the boundary as opaque handles created by `irsa_*_new` and
//! released with the matching `irsa_*_free`. Every fallible call returns an
//! [`IrsaStatus`]; on failure a description is available from
//! [`irsa_last_error`] on the same thread until the next failing call.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use irsa::analysis::{self, CapacityRegion};
use irsa::cli_io;
use irsa::sim::{self, LoadVector, NetworkSpec, SimOptions, SimReport};
use irsa::{DegreeDistribution, Policy};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrsaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    InvalidUtf8 = 3,
    Config = 4,
    Simulation = 5,
    Analysis = 6,
    BufferTooSmall = 7,
    NoData = 8,
    Panic = 99,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IrsaPolicy {
    Random = 0,
    RoundRobin = 1,
}

impl From<IrsaPolicy> for Policy {
    fn from(p: IrsaPolicy) -> Self {
        match p {
            IrsaPolicy::Random => Policy::Random,
            IrsaPolicy::RoundRobin => Policy::RoundRobin,
        }
    }
}

pub struct IrsaDistribution(DegreeDistribution);
pub struct IrsaNetwork(NetworkSpec);
pub struct IrsaReport(SimReport);
pub struct IrsaRegion(CapacityRegion);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(IrsaStatus, String);

impl Failure {
    fn null(what: &str) -> Self {
        Failure(IrsaStatus::NullPointer, format!("{what} is null"))
    }

    fn invalid(msg: impl Into<String>) -> Self {
        Failure(IrsaStatus::InvalidArgument, msg.into())
    }
}

impl From<irsa::DistError> for Failure {
    fn from(e: irsa::DistError) -> Self {
        Failure(IrsaStatus::InvalidArgument, e.to_string())
    }
}

impl From<irsa::SimError> for Failure {
    fn from(e: irsa::SimError) -> Self {
        Failure(IrsaStatus::Simulation, e.to_string())
    }
}

impl From<irsa::AnalysisError> for Failure {
    fn from(e: irsa::AnalysisError) -> Self {
        Failure(IrsaStatus::Analysis, e.to_string())
    }
}

impl From<cli_io::ConfigError> for Failure {
    fn from(e: cli_io::ConfigError) -> Self {
        Failure(IrsaStatus::Config, e.to_string())
    }
}

impl From<cli_io::RunError> for Failure {
    fn from(e: cli_io::RunError) -> Self {
        let status = match e {
            cli_io::RunError::Config(_) => IrsaStatus::Config,
            cli_io::RunError::Analysis(_) => IrsaStatus::Analysis,
            _ => IrsaStatus::Simulation,
        };
        Failure(status, e.to_string())
    }
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("interior nuls removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(msg));
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> IrsaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => IrsaStatus::Ok,
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
            set_error(format!("panic: {msg}"));
            IrsaStatus::Panic
        }
    }
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn string<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Failure(IrsaStatus::InvalidUtf8, format!("{what}: {e}")))
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Message for the last failing call on this thread, or NULL. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn irsa_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn irsa_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Degree distribution with `probs[i]` on `degrees[i]`.
///
/// # Safety
/// `degrees` and `probs` must point to `len` readable elements; `out_dist` must
/// be writable.
#[no_mangle]
pub unsafe extern "C" fn irsa_distribution_new(
    degrees: *const u32,
    probs: *const f64,
    len: usize,
    out_dist: *mut *mut IrsaDistribution,
) -> IrsaStatus {
    guard(|| {
        let out_dist = out(out_dist, "out_dist")?;
        let degrees = slice(degrees, len, "degrees")?;
        let probs = slice(probs, len, "probs")?;
        let d = DegreeDistribution::new(degrees.iter().copied().zip(probs.iter().copied()))?;
        *out_dist = boxed(IrsaDistribution(d));
        Ok(())
    })
}

/// The optimized distribution 0.5x² + 0.28x³ + 0.22x⁸.
///
/// # Safety
/// `out_dist` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irsa_distribution_optimal(out_dist: *mut *mut IrsaDistribution) -> IrsaStatus {
    guard(|| {
        *out(out_dist, "out_dist")? = boxed(IrsaDistribution(DegreeDistribution::optimal_irsa()));
        Ok(())
    })
}

/// # Safety
/// `dist` must be NULL or a handle from `irsa_distribution_*` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irsa_distribution_free(dist: *mut IrsaDistribution) {
    if !dist.is_null() {
        drop(Box::from_raw(dist));
    }
}

/// # Safety
/// `dist` must be a live handle and `out_mean` writable.
#[no_mangle]
pub unsafe extern "C" fn irsa_distribution_mean_degree(
    dist: *const IrsaDistribution,
    out_mean: *mut f64,
) -> IrsaStatus {
    guard(|| {
        *out(out_mean, "out_mean")? = handle(dist, "dist")?.0.mean_degree();
        Ok(())
    })
}

/// Asymptotic load threshold by density evolution, bisected to `tol`.
///
/// # Safety
/// `dist` must be a live handle and `out_threshold` writable.
#[no_mangle]
pub unsafe extern "C" fn irsa_de_threshold(
    dist: *const IrsaDistribution,
    tol: f64,
    out_threshold: *mut f64,
) -> IrsaStatus {
    guard(|| {
        let d = handle(dist, "dist")?;
        *out(out_threshold, "out_threshold")? = analysis::de_threshold(&d.0, tol)?;
        Ok(())
    })
}

/// Network of `k` classes; class i has `populations[i]` users drawing from
/// `dists[i]`. The distributions are copied.
///
/// # Safety
/// `populations` and `dists` must point to `k` readable elements, each
/// distribution a live handle; `out_net` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irsa_network_new(
    frame_size: usize,
    populations: *const usize,
    dists: *const *const IrsaDistribution,
    k: usize,
    out_net: *mut *mut IrsaNetwork,
) -> IrsaStatus {
    guard(|| {
        let out_net = out(out_net, "out_net")?;
        let populations = slice(populations, k, "populations")?;
        let dists = slice(dists, k, "dists")?;
        let mut classes = Vec::with_capacity(k);
        for (&n, &d) in populations.iter().zip(dists) {
            classes.push((n, handle(d, "dists[i]")?.0.clone()));
        }
        *out_net = boxed(IrsaNetwork(NetworkSpec::new(frame_size, classes)?));
        Ok(())
    })
}

/// # Safety
/// `net` must be NULL or a handle from `irsa_network_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irsa_network_free(net: *mut IrsaNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// Simulates `frames` frames at per-class loads `loads[0..k]`. `workers` = 0
/// uses the default thread pool. Results do not depend on `workers`.
///
/// # Safety
/// `net` must be a live handle, `loads` must point to `k` readable values
/// and `out_report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irsa_simulate(
    net: *const IrsaNetwork,
    loads: *const f64,
    k: usize,
    policy: IrsaPolicy,
    frames: u64,
    seed: u64,
    workers: usize,
    out_report: *mut *mut IrsaReport,
) -> IrsaStatus {
    guard(|| {
        let net = handle(net, "net")?;
        let out_report = out(out_report, "out_report")?;
        let load = LoadVector::new(slice(loads, k, "loads")?.to_vec())?;
        let mut opts = SimOptions::new(policy.into(), frames, seed);
        if workers > 0 {
            opts = opts.with_workers(workers);
        }
        *out_report = boxed(IrsaReport(sim::run_simulation(&net.0, &load, &opts)?));
        Ok(())
    })
}

/// # Safety
/// `report` must be NULL or a handle from `irsa_simulate` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irsa_report_free(report: *mut IrsaReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Number of classes in the report, or 0 for NULL.
///
/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn irsa_report_num_classes(report: *const IrsaReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.throughput.len())
}

unsafe fn class_value(
    report: *const IrsaReport,
    class: usize,
    value: *mut f64,
    pick: impl FnOnce(&SimReport, usize) -> Option<f64>,
) -> IrsaStatus {
    guard(|| {
        let r = &handle(report, "report")?.0;
        let value = out(value, "out_value")?;
        if class >= r.throughput.len() {
            return Err(Failure::invalid(format!("class {class} out of range")));
        }
        *value = pick(r, class).ok_or_else(|| Failure(IrsaStatus::NoData, format!("no samples for class {class}")))?;
        Ok(())
    })
}

/// # Safety
/// `report` must be a live handle and `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn irsa_report_throughput(
    report: *const IrsaReport,
    class: usize,
    out_value: *mut f64,
) -> IrsaStatus {
    class_value(report, class, out_value, |r, i| Some(r.throughput[i]))
}

/// # Safety
/// `report` must be a live handle and `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn irsa_report_ci95(
    report: *const IrsaReport,
    class: usize,
    out_value: *mut f64,
) -> IrsaStatus {
    class_value(report, class, out_value, |r, i| Some(r.ci95[i]))
}

/// # Safety
/// `report` must be a live handle and `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn irsa_report_loss_rate(
    report: *const IrsaReport,
    class: usize,
    out_value: *mut f64,
) -> IrsaStatus {
    class_value(report, class, out_value, |r, i| Some(r.loss_rate[i]))
}

/// Average delay in frames. `IRSA_STATUS_NO_DATA` if nothing was delivered.
///
/// # Safety
/// `report` must be a live handle and `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn irsa_report_average_delay(
    report: *const IrsaReport,
    class: usize,
    out_value: *mut f64,
) -> IrsaStatus {
    class_value(report, class, out_value, |r, i| r.delays.average_frames(i))
}

/// Largest observed delay in frames.
///
/// # Safety
/// `report` must be a live handle and `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn irsa_report_max_delay(
    report: *const IrsaReport,
    class: usize,
    out_value: *mut u64,
) -> IrsaStatus {
    guard(|| {
        let r = &handle(report, "report")?.0;
        let value = out(out_value, "out_value")?;
        if class >= r.throughput.len() {
            return Err(Failure::invalid(format!("class {class} out of range")));
        }
        *value = r
            .delays
            .max_frames(class)
            .ok_or_else(|| Failure(IrsaStatus::NoData, format!("no samples for class {class}")))?;
        Ok(())
    })
}

/// # Safety
/// `report` must be a live handle and `out_value` writable.
#[no_mangle]
pub unsafe extern "C" fn irsa_report_total_throughput(
    report: *const IrsaReport,
    out_value: *mut f64,
) -> IrsaStatus {
    guard(|| {
        *out(out_value, "out_value")? = handle(report, "report")?.0.total_throughput;
        Ok(())
    })
}

/// Capacity region of `net` for single-class optimum `t_star` in (0, 1].
///
/// # Safety
/// `net` must be a live handle and `out_region` writable.
#[no_mangle]
pub unsafe extern "C" fn irsa_region_new(
    net: *const IrsaNetwork,
    t_star: f64,
    out_region: *mut *mut IrsaRegion,
) -> IrsaStatus {
    guard(|| {
        let net = handle(net, "net")?;
        let out_region = out(out_region, "out_region")?;
        *out_region = boxed(IrsaRegion(analysis::capacity_region(&net.0, t_star)?));
        Ok(())
    })
}

/// # Safety
/// `region` must be NULL or a handle from `irsa_region_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irsa_region_free(region: *mut IrsaRegion) {
    if !region.is_null() {
        drop(Box::from_raw(region));
    }
}

/// # Safety
/// `region` must be a live handle, `t` must point to `k` readable values and
/// `out_inside` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irsa_region_contains(
    region: *const IrsaRegion,
    t: *const f64,
    k: usize,
    out_inside: *mut bool,
) -> IrsaStatus {
    guard(|| {
        let region = handle(region, "region")?;
        let out_inside = out(out_inside, "out_inside")?;
        *out_inside = region.0.contains(slice(t, k, "t")?)?;
        Ok(())
    })
}

/// Boundary polygon of a two-class region as interleaved (t_1, t_2) pairs,
/// counter-clockwise from the origin. Writes the vertex count to
/// `out_count`; if `capacity` (in vertices) is too small nothing is copied
/// and `IRSA_STATUS_BUFFER_TOO_SMALL` is returned, so a first call with
/// `capacity` = 0 sizes the buffer.
///
/// # Safety
/// `region` must be a live handle, `xy` must have room for `2 * capacity`
/// doubles and `out_count` must be writable.
#[no_mangle]
pub unsafe extern "C" fn irsa_region_boundary(
    region: *const IrsaRegion,
    resolution: usize,
    xy: *mut f64,
    capacity: usize,
    out_count: *mut usize,
) -> IrsaStatus {
    guard(|| {
        let region = handle(region, "region")?;
        let out_count = out(out_count, "out_count")?;
        let vertices = region.0.boundary_2d(resolution)?;
        *out_count = vertices.len();
        if capacity < vertices.len() {
            return Err(Failure(
                IrsaStatus::BufferTooSmall,
                format!("{} vertices, capacity {capacity}", vertices.len()),
            ));
        }
        if xy.is_null() {
            return Err(Failure::null("xy"));
        }
        let dst = std::slice::from_raw_parts_mut(xy, 2 * vertices.len());
        for (i, (a, b)) in vertices.into_iter().enumerate() {
            dst[2 * i] = a;
            dst[2 * i + 1] = b;
        }
        Ok(())
    })
}

/// Runs a JSON experiment configuration (as accepted by `irsa-sim`) and
/// returns the CSV document in `out_csv`, to be released with
/// `irsa_string_free`. The config must name its experiment and seed.
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out_csv` writable.
#[no_mangle]
pub unsafe extern "C" fn irsa_run_config(
    config_json: *const c_char,
    workers: usize,
    out_csv: *mut *mut c_char,
) -> IrsaStatus {
    guard(|| {
        let text = string(config_json, "config_json")?;
        let out_csv = out(out_csv, "out_csv")?;
        let cfg = cli_io::parse_config(text)?;
        let csv = cli_io::run_experiment(&cfg, (workers > 0).then_some(workers))?;
        *out_csv = CString::new(csv)
            .map_err(|_| Failure::invalid("output contains NUL"))?
            .into_raw();
        Ok(())
    })
}

/// # Safety
/// `s` must be NULL or a string returned by this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn irsa_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
