//! C ABI over the inventory simulator: opaque handles for instances,
//! traces, and environments, status-code errors, and a thread-local
//! message for the last failure.
//!
//! Ownership rules: every `*_new`/`*_generate` hands the caller an owned
//! handle that must go back through the matching `*_free`; strings
//! returned as `char*` must go back through [`es_string_free`]. Handles
//! are not thread-safe; share them across threads only with external
//! synchronization.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use echelon_core::demand::{generate_demand, generate_forecast, Trace};
use echelon_core::error::CoreError;
use echelon_core::instance::InstanceSpec;
use echelon_core::sim::Env;

/// Status code returned by every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EsStatus {
    EsOk = 0,
    /// A required pointer argument was null.
    EsNullPointer = 1,
    /// An argument failed validation (length, range, schedule).
    EsInvalidArgument = 2,
    /// A buffer or vector had the wrong length.
    EsDimension = 3,
    /// A warehouse call arrived outside its scheduled period.
    EsOffSchedule = 4,
    /// JSON or CSV input failed to parse.
    EsParse = 5,
    /// A panic was caught at the boundary.
    EsInternal = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let sanitized = CString::new(message.replace('\0', " "))
        .unwrap_or_else(|_| CString::new("error message unavailable").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(sanitized));
}

fn status_of(err: &CoreError) -> EsStatus {
    match err {
        CoreError::Dimension { .. } => EsStatus::EsDimension,
        CoreError::OffSchedule { .. } => EsStatus::EsOffSchedule,
        CoreError::Parse { .. } | CoreError::Json(_) | CoreError::CheckpointVersion { .. } => {
            EsStatus::EsParse
        }
        _ => EsStatus::EsInvalidArgument,
    }
}

fn fail(err: CoreError) -> EsStatus {
    let status = status_of(&err);
    set_error(err.to_string());
    status
}

/// Run a closure with panics converted to `EsInternal`.
fn guarded(body: impl FnOnce() -> EsStatus) -> EsStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic at the ffi boundary".into());
            EsStatus::EsInternal
        }
    }
}

macro_rules! require {
    ($ptr:expr, $name:literal) => {
        match unsafe { $ptr.as_ref() } {
            Some(r) => r,
            None => {
                set_error(concat!($name, " is null").into());
                return EsStatus::EsNullPointer;
            }
        }
    };
}

macro_rules! require_mut {
    ($ptr:expr, $name:literal) => {
        match unsafe { $ptr.as_mut() } {
            Some(r) => r,
            None => {
                set_error(concat!($name, " is null").into());
                return EsStatus::EsNullPointer;
            }
        }
    };
}

/// Opaque instance description handle.
pub struct EsInstance(InstanceSpec);

/// Opaque demand or forecast trace handle.
pub struct EsTrace(Trace);

/// Opaque simulation environment handle.
pub struct EsEnv(Env);

/// Message describing the most recent failure on this thread, or null when
/// nothing has failed yet. The pointer stays valid until the next failing
/// call on the same thread.
#[no_mangle]
pub extern "C" fn es_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow()
            .as_ref()
            .map_or(ptr::null(), |message| message.as_ptr())
    })
}

/// Library version as a static string; never free it.
#[no_mangle]
pub extern "C" fn es_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Release a string returned by this library.
///
/// # Safety
/// `s` must be a pointer previously returned by an `es_*` call that
/// documents [`es_string_free`] as its deallocator, or null.
#[no_mangle]
pub unsafe extern "C" fn es_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// Build the desk-scale instance for a seed. Returns an owned handle.
#[no_mangle]
pub extern "C" fn es_instance_new_desk(seed: u64) -> *mut EsInstance {
    Box::into_raw(Box::new(EsInstance(InstanceSpec::desk(seed))))
}

/// Parse an instance from its JSON form.
///
/// # Safety
/// `json` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn es_instance_from_json(
    json: *const c_char,
    out: *mut *mut EsInstance,
) -> EsStatus {
    guarded(|| {
        if json.is_null() || out.is_null() {
            set_error("json or out is null".into());
            return EsStatus::EsNullPointer;
        }
        let text = match unsafe { CStr::from_ptr(json) }.to_str() {
            Ok(t) => t,
            Err(_) => {
                set_error("json is not valid utf-8".into());
                return EsStatus::EsParse;
            }
        };
        match InstanceSpec::from_json(text) {
            Ok(spec) => {
                unsafe { *out = Box::into_raw(Box::new(EsInstance(spec))) };
                EsStatus::EsOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Serialize an instance to JSON. The returned string is owned by the
/// caller; release it with [`es_string_free`].
///
/// # Safety
/// `instance` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn es_instance_to_json(
    instance: *const EsInstance,
    out: *mut *mut c_char,
) -> EsStatus {
    guarded(|| {
        let instance = require!(instance, "instance");
        if out.is_null() {
            set_error("out is null".into());
            return EsStatus::EsNullPointer;
        }
        match instance.0.to_json() {
            Ok(json) => {
                let c = CString::new(json.replace('\0', " ")).expect("nul stripped");
                unsafe { *out = c.into_raw() };
                EsStatus::EsOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of products in the instance; zero when the handle is null.
///
/// # Safety
/// `instance` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn es_instance_num_products(instance: *const EsInstance) -> usize {
    unsafe { instance.as_ref() }.map_or(0, |i| i.0.num_products())
}

/// Number of stores in the instance; zero when the handle is null.
///
/// # Safety
/// `instance` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn es_instance_num_stores(instance: *const EsInstance) -> usize {
    unsafe { instance.as_ref() }.map_or(0, |i| i.0.num_stores())
}

/// Total simulated periods in the instance; zero when the handle is null.
///
/// # Safety
/// `instance` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn es_instance_horizon(instance: *const EsInstance) -> usize {
    unsafe { instance.as_ref() }.map_or(0, |i| i.0.horizon)
}

/// Release an instance handle.
///
/// # Safety
/// `instance` must be an owned handle from this library, or null.
#[no_mangle]
pub unsafe extern "C" fn es_instance_free(instance: *mut EsInstance) {
    if !instance.is_null() {
        drop(unsafe { Box::from_raw(instance) });
    }
}

/// Generate the seeded demand trace for an instance.
///
/// # Safety
/// `instance` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn es_demand_generate(
    instance: *const EsInstance,
    seed: u64,
    out: *mut *mut EsTrace,
) -> EsStatus {
    guarded(|| {
        let instance = require!(instance, "instance");
        if out.is_null() {
            set_error("out is null".into());
            return EsStatus::EsNullPointer;
        }
        let trace = generate_demand(&instance.0, seed);
        unsafe { *out = Box::into_raw(Box::new(EsTrace(trace))) };
        EsStatus::EsOk
    })
}

/// Blend a forecast trace against a demand trace at a target product-level
/// correlation.
///
/// # Safety
/// `demand` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn es_forecast_generate(
    demand: *const EsTrace,
    target_r: f64,
    seed: u64,
    out: *mut *mut EsTrace,
) -> EsStatus {
    guarded(|| {
        let demand = require!(demand, "demand");
        if out.is_null() {
            set_error("out is null".into());
            return EsStatus::EsNullPointer;
        }
        match generate_forecast(&demand.0, target_r, seed) {
            Ok(trace) => {
                unsafe { *out = Box::into_raw(Box::new(EsTrace(trace))) };
                EsStatus::EsOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Number of periods in the trace; zero when the handle is null.
///
/// # Safety
/// `trace` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn es_trace_periods(trace: *const EsTrace) -> usize {
    unsafe { trace.as_ref() }.map_or(0, |t| t.0.periods)
}

/// Read one trace value into `out`.
///
/// # Safety
/// `trace` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn es_trace_get(
    trace: *const EsTrace,
    period: usize,
    store: usize,
    product: usize,
    out: *mut f64,
) -> EsStatus {
    guarded(|| {
        let trace = require!(trace, "trace");
        if out.is_null() {
            set_error("out is null".into());
            return EsStatus::EsNullPointer;
        }
        let t = &trace.0;
        if period >= t.periods || store >= t.stores || product >= t.products {
            set_error(format!(
                "index ({period}, {store}, {product}) outside trace of \
                 {} periods, {} stores, {} products",
                t.periods, t.stores, t.products
            ));
            return EsStatus::EsInvalidArgument;
        }
        unsafe { *out = t.get(period, store, product) };
        EsStatus::EsOk
    })
}

/// Release a trace handle.
///
/// # Safety
/// `trace` must be an owned handle from this library, or null.
#[no_mangle]
pub unsafe extern "C" fn es_trace_free(trace: *mut EsTrace) {
    if !trace.is_null() {
        drop(unsafe { Box::from_raw(trace) });
    }
}

/// Create a coupled warehouse-and-stores environment. Returns null when
/// `instance` is null.
///
/// # Safety
/// `instance` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn es_env_new(instance: *const EsInstance) -> *mut EsEnv {
    match unsafe { instance.as_ref() } {
        Some(i) => Box::into_raw(Box::new(EsEnv(Env::new(&i.0)))),
        None => {
            set_error("instance is null".into());
            ptr::null_mut()
        }
    }
}

/// Create an environment with the warehouse bypassed: every store order is
/// supplied in full and no cycle calls are expected. Returns null when
/// `instance` is null.
///
/// # Safety
/// `instance` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn es_env_new_infinite(instance: *const EsInstance) -> *mut EsEnv {
    match unsafe { instance.as_ref() } {
        Some(i) => Box::into_raw(Box::new(EsEnv(Env::new_infinite(&i.0)))),
        None => {
            set_error("instance is null".into());
            ptr::null_mut()
        }
    }
}

/// Current period of the environment; zero when the handle is null.
///
/// # Safety
/// `env` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn es_env_period(env: *const EsEnv) -> usize {
    unsafe { env.as_ref() }.map_or(0, |e| e.0.period())
}

/// Whether the next call must be [`es_env_begin_cycle`].
///
/// # Safety
/// `env` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn es_env_at_cycle_boundary(env: *const EsEnv) -> bool {
    unsafe { env.as_ref() }.is_some_and(|e| e.0.at_cycle_boundary())
}

/// Open a warehouse cycle. When `fill_out` is non-null it must have room
/// for one value per product and receives the post-delivery fill levels.
///
/// # Safety
/// `env` must be a live handle; `fill_out` must be null or point to at
/// least `num_products` doubles.
#[no_mangle]
pub unsafe extern "C" fn es_env_begin_cycle(env: *mut EsEnv, fill_out: *mut f64) -> EsStatus {
    guarded(|| {
        let env = require_mut!(env, "env");
        match env.0.begin_cycle() {
            Ok(start) => {
                if !fill_out.is_null() {
                    let out = unsafe {
                        std::slice::from_raw_parts_mut(fill_out, start.fill.len())
                    };
                    out.copy_from_slice(&start.fill);
                }
                EsStatus::EsOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Place the vendor order for the open cycle. `flags` holds one entry per
/// product: nonzero orders a fill-up to capacity.
///
/// # Safety
/// `env` must be a live handle; `flags` must point to `flags_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn es_env_place_order(
    env: *mut EsEnv,
    flags: *const u8,
    flags_len: usize,
) -> EsStatus {
    guarded(|| {
        let env = require_mut!(env, "env");
        if flags.is_null() {
            set_error("flags is null".into());
            return EsStatus::EsNullPointer;
        }
        let raw = unsafe { std::slice::from_raw_parts(flags, flags_len) };
        let flags: Vec<bool> = raw.iter().map(|&b| b != 0).collect();
        match env.0.place_order(&flags) {
            Ok(_) => EsStatus::EsOk,
            Err(e) => fail(e),
        }
    })
}

/// Advance one period. `desired` and `demand` are row-major
/// `num_stores x num_products` grids. When `store_costs_out` is non-null
/// it must have room for one value per store and receives each store's
/// cost for the period.
///
/// # Safety
/// `env` must be a live handle; `desired` and `demand` must each point to
/// `len` doubles; `store_costs_out` must be null or point to at least
/// `num_stores` doubles.
#[no_mangle]
pub unsafe extern "C" fn es_env_step(
    env: *mut EsEnv,
    desired: *const f64,
    demand: *const f64,
    len: usize,
    store_costs_out: *mut f64,
) -> EsStatus {
    guarded(|| {
        let env = require_mut!(env, "env");
        if desired.is_null() || demand.is_null() {
            set_error("desired or demand is null".into());
            return EsStatus::EsNullPointer;
        }
        let stores = env.0.spec().num_stores();
        let products = env.0.spec().num_products();
        if len != stores * products {
            return fail(CoreError::Dimension {
                expected: stores * products,
                got: len,
                context: "step grid length".into(),
            });
        }
        let to_grid = |flat: &[f64]| -> Vec<Vec<f64>> {
            flat.chunks(products).map(<[f64]>::to_vec).collect()
        };
        let desired = to_grid(unsafe { std::slice::from_raw_parts(desired, len) });
        let demand = to_grid(unsafe { std::slice::from_raw_parts(demand, len) });
        let weights = env.0.spec().weights;
        match env.0.step(&desired, &demand) {
            Ok(outcome) => {
                if !store_costs_out.is_null() {
                    let out = unsafe { std::slice::from_raw_parts_mut(store_costs_out, stores) };
                    for (j, slot) in out.iter_mut().enumerate() {
                        match echelon_core::rewards::store_breakdown(&outcome, j, &weights) {
                            Ok(b) => *slot = b.cost,
                            Err(e) => return fail(e),
                        }
                    }
                }
                EsStatus::EsOk
            }
            Err(e) => fail(e),
        }
    })
}

/// Read one store shelf level into `out`.
///
/// # Safety
/// `env` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn es_env_store_level(
    env: *const EsEnv,
    store: usize,
    product: usize,
    out: *mut f64,
) -> EsStatus {
    guarded(|| {
        let env = require!(env, "env");
        if out.is_null() {
            set_error("out is null".into());
            return EsStatus::EsNullPointer;
        }
        if store >= env.0.spec().num_stores() || product >= env.0.spec().num_products() {
            set_error(format!("store {store} product {product} out of range"));
            return EsStatus::EsInvalidArgument;
        }
        unsafe { *out = env.0.store_level(store, product) };
        EsStatus::EsOk
    })
}

/// Digest of the full simulation state, for replay and isolation checks.
/// The returned string is owned by the caller; release it with
/// [`es_string_free`].
///
/// # Safety
/// `env` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn es_env_state_fingerprint(
    env: *const EsEnv,
    out: *mut *mut c_char,
) -> EsStatus {
    guarded(|| {
        let env = require!(env, "env");
        if out.is_null() {
            set_error("out is null".into());
            return EsStatus::EsNullPointer;
        }
        let digest = CString::new(env.0.state_fingerprint()).expect("hex digest has no nul");
        unsafe { *out = digest.into_raw() };
        EsStatus::EsOk
    })
}

/// Release an environment handle.
///
/// # Safety
/// `env` must be an owned handle from this library, or null.
#[no_mangle]
pub unsafe extern "C" fn es_env_free(env: *mut EsEnv) {
    if !env.is_null() {
        drop(unsafe { Box::from_raw(env) });
    }
}
