//! C ABI over `ramp-core`.
//!
//! Objects are opaque handles created by `ramp_*_new`/`ramp_*_load` and
//! released with the matching `ramp_*_free`. Every fallible function returns a
//! [`RampStatus`]; on failure a message is available from
//! [`ramp_last_error_message`] on the same thread. Panics never cross the
//! boundary and are reported as [`RampStatus::Internal`].
//!
//! Configurations are `double` arrays of length `dof`; point clouds and
//! control points are packed `x, y, z` triples.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Arc;

use nalgebra::{DVector, Vector3};
use ramp_core::csdf::{csdf_with_gradient, CsdfParams, SceneCloud};
use ramp_core::follower::{Follower, FollowerParams};
use ramp_core::kinematics::KinematicChain;
use ramp_core::planner::{MppiParams, TrajectoryGenerator};
use ramp_core::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RampStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    EmptyCloud = 3,
    Parse = 4,
    BufferTooSmall = 5,
    Internal = 6,
}

/// Kinematic chain handle.
pub struct RampChain(Arc<KinematicChain>);

/// Scene point cloud handle.
pub struct RampCloud(SceneCloud);

/// MPPI trajectory generator handle.
pub struct RampGenerator {
    inner: TrajectoryGenerator,
    dof: usize,
}

/// Trajectory follower handle.
pub struct RampFollower {
    inner: Follower,
    dof: usize,
}

/// C-SDF offsets in meters.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct RampCsdfParams {
    pub rho: f64,
    pub r: f64,
}

/// Summary of one generator iteration.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RampIterationInfo {
    pub generation: u64,
    pub horizon: usize,
    /// Number of waypoints of the published trajectory (horizon + 2).
    pub waypoints: usize,
    pub trajectory_min_csdf: f64,
    pub feasible_fraction: f64,
    /// 1 when the cloud was empty and collision costs were skipped.
    pub cloud_empty: i32,
}

/// Diagnostics of one follower tick.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RampTickInfo {
    /// C-SDF at the current configuration; NaN when the cloud was empty.
    pub csdf: f64,
    pub s_star: f64,
    pub u_norm: f64,
    /// Constraint value; NaN when the constraint is inactive.
    pub h: f64,
    pub generation: u64,
    pub at_goal: i32,
    pub degenerate_gradient: i32,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

struct Failure(RampStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match e {
            Error::EmptyCloud => RampStatus::EmptyCloud,
            Error::Parse { .. } => RampStatus::Parse,
            _ => RampStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: RampStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

/// Runs `f`, recording errors and catching panics.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> RampStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            RampStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            RampStatus::Internal
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(RampStatus::NullPointer, format!("{what} is null")))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| fail(RampStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(RampStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(RampStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(RampStatus::InvalidInput, format!("{what} is not valid UTF-8")))
}

unsafe fn configuration(p: *const f64, len: usize, dof: usize) -> Result<DVector<f64>, Failure> {
    if len != dof {
        return Err(fail(
            RampStatus::InvalidInput,
            format!("expected a configuration of dimension {dof}, got {len}"),
        ));
    }
    Ok(DVector::from_column_slice(slice(p, len, "configuration")?))
}

fn parse_json<T: serde::de::DeserializeOwned + Default>(json: Option<&str>, what: &str) -> Result<T, Failure> {
    match json {
        None => Ok(T::default()),
        Some(text) => serde_json::from_str(text).map_err(|e| {
            fail(
                RampStatus::Parse,
                format!("{what}:{}:{}: {e}", e.line(), e.column()),
            )
        }),
    }
}

unsafe fn opt_str<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn csdf_params(p: *const RampCsdfParams) -> Result<CsdfParams, Failure> {
    let params = match p.as_ref() {
        Some(p) => CsdfParams { rho: p.rho, r: p.r },
        None => CsdfParams::default(),
    };
    params.validate()?;
    Ok(params)
}

unsafe fn write_out<T>(out: *mut T, value: T) {
    if !out.is_null() {
        *out = value;
    }
}

/// Message of the last failed call on this thread, NUL-terminated into
/// `buf`. Returns the message length in bytes (excluding NUL); when `cap` is
/// too small the message is truncated. Pass a null `buf` to query the length.
#[no_mangle]
pub unsafe extern "C" fn ramp_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            ptr::copy_nonoverlapping(msg.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Static description of a status code.
#[no_mangle]
pub extern "C" fn ramp_status_string(status: RampStatus) -> *const c_char {
    let s: &'static CStr = match status {
        RampStatus::Ok => c"ok",
        RampStatus::NullPointer => c"null pointer",
        RampStatus::InvalidInput => c"invalid input",
        RampStatus::EmptyCloud => c"empty point cloud",
        RampStatus::Parse => c"parse error",
        RampStatus::BufferTooSmall => c"buffer too small",
        RampStatus::Internal => c"internal error",
    };
    s.as_ptr()
}

/// Loads a bundled model (`"planar3"`, `"spatial7"`) or a model JSON file.
#[no_mangle]
pub unsafe extern "C" fn ramp_chain_load(name_or_path: *const c_char, out: *mut *mut RampChain) -> RampStatus {
    guard(|| {
        let name = str_arg(name_or_path, "name_or_path")?;
        let out = deref_mut(out, "out")?;
        let chain = KinematicChain::resolve(name, None)?;
        *out = Box::into_raw(Box::new(RampChain(Arc::new(chain))));
        Ok(())
    })
}

/// Builds a chain from model JSON text.
#[no_mangle]
pub unsafe extern "C" fn ramp_chain_from_json(json: *const c_char, out: *mut *mut RampChain) -> RampStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        let out = deref_mut(out, "out")?;
        let chain = KinematicChain::from_json_str(text)?;
        *out = Box::into_raw(Box::new(RampChain(Arc::new(chain))));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ramp_chain_free(chain: *mut RampChain) {
    if !chain.is_null() {
        drop(Box::from_raw(chain));
    }
}

#[no_mangle]
pub unsafe extern "C" fn ramp_chain_dof(chain: *const RampChain, out: *mut usize) -> RampStatus {
    guard(|| {
        let chain = deref(chain, "chain")?;
        *deref_mut(out, "out")? = chain.0.dof();
        Ok(())
    })
}

/// Control points at `q` as packed triples. `count` receives the number of
/// points; if `cap_points` is smaller, nothing is written and
/// `BufferTooSmall` is returned.
#[no_mangle]
pub unsafe extern "C" fn ramp_chain_control_points(
    chain: *const RampChain,
    q: *const f64,
    dof: usize,
    out_xyz: *mut f64,
    cap_points: usize,
    count: *mut usize,
) -> RampStatus {
    guard(|| {
        let chain = &deref(chain, "chain")?.0;
        let q = configuration(q, dof, chain.dof())?;
        let cps = chain.generate_control_points(&q, None)?;
        write_out(count, cps.points.len());
        if cps.points.len() > cap_points {
            return Err(fail(
                RampStatus::BufferTooSmall,
                format!("{} control points do not fit in {cap_points}", cps.points.len()),
            ));
        }
        if out_xyz.is_null() {
            return Err(fail(RampStatus::NullPointer, "out_xyz is null"));
        }
        for (k, p) in cps.points.iter().enumerate() {
            for a in 0..3 {
                *out_xyz.add(3 * k + a) = p[a];
            }
        }
        Ok(())
    })
}

/// Copies `n_points` packed triples into a new cloud. An empty cloud is
/// allowed; C-SDF queries on it fail with `EmptyCloud`.
#[no_mangle]
pub unsafe extern "C" fn ramp_cloud_new(xyz: *const f64, n_points: usize, out: *mut *mut RampCloud) -> RampStatus {
    guard(|| {
        let data = slice(xyz, 3 * n_points, "xyz")?;
        let out = deref_mut(out, "out")?;
        let points: Vec<Vector3<f64>> = data
            .chunks_exact(3)
            .map(|c| Vector3::new(c[0], c[1], c[2]))
            .collect();
        let cloud = SceneCloud::from_points(&points)?;
        *out = Box::into_raw(Box::new(RampCloud(cloud)));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ramp_cloud_free(cloud: *mut RampCloud) {
    if !cloud.is_null() {
        drop(Box::from_raw(cloud));
    }
}

#[no_mangle]
pub unsafe extern "C" fn ramp_cloud_len(cloud: *const RampCloud, out: *mut usize) -> RampStatus {
    guard(|| {
        *deref_mut(out, "out")? = deref(cloud, "cloud")?.0.len();
        Ok(())
    })
}

/// C-SDF value at `q`, and its gradient into `grad` (length `dof`) when
/// `grad` is non-null. `params` may be null for the defaults. `degenerate`
/// (optional) is set to 1 when the gradient is undefined and reported as zero.
#[no_mangle]
pub unsafe extern "C" fn ramp_csdf(
    chain: *const RampChain,
    cloud: *const RampCloud,
    q: *const f64,
    dof: usize,
    params: *const RampCsdfParams,
    value: *mut f64,
    grad: *mut f64,
    degenerate: *mut i32,
) -> RampStatus {
    guard(|| {
        let chain = &deref(chain, "chain")?.0;
        let cloud = &deref(cloud, "cloud")?.0;
        let q = configuration(q, dof, chain.dof())?;
        let params = csdf_params(params)?;
        let out = deref_mut(value, "value")?;
        let res = csdf_with_gradient(chain, &q, cloud, &params, None)?;
        *out = res.value;
        if !grad.is_null() {
            let g = res.gradient.expect("gradient requested");
            ptr::copy_nonoverlapping(g.as_ptr(), grad, dof);
        }
        write_out(degenerate, i32::from(res.degenerate));
        Ok(())
    })
}

/// New generator towards `goal`. `mppi_json` (planner parameters) and
/// `csdf_params` may be null for the defaults.
#[no_mangle]
pub unsafe extern "C" fn ramp_generator_new(
    chain: *const RampChain,
    goal: *const f64,
    dof: usize,
    mppi_json: *const c_char,
    csdf_params_: *const RampCsdfParams,
    out: *mut *mut RampGenerator,
) -> RampStatus {
    guard(|| {
        let chain = &deref(chain, "chain")?.0;
        let goal = configuration(goal, dof, chain.dof())?;
        let params: MppiParams = parse_json(opt_str(mppi_json, "mppi_json")?, "mppi_json")?;
        let csdf = csdf_params(csdf_params_)?;
        let out = deref_mut(out, "out")?;
        let inner = TrajectoryGenerator::new(chain.clone(), goal, params, csdf)?;
        *out = Box::into_raw(Box::new(RampGenerator { inner, dof }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ramp_generator_free(generator: *mut RampGenerator) {
    if !generator.is_null() {
        drop(Box::from_raw(generator));
    }
}

/// One MPPI iteration from `q_now` against `cloud` at time `now` (seconds).
/// `info` may be null.
#[no_mangle]
pub unsafe extern "C" fn ramp_generator_iterate(
    generator: *mut RampGenerator,
    q_now: *const f64,
    dof: usize,
    cloud: *const RampCloud,
    now: f64,
    info: *mut RampIterationInfo,
) -> RampStatus {
    guard(|| {
        let g = deref_mut(generator, "generator")?;
        let cloud = &deref(cloud, "cloud")?.0;
        let q = configuration(q_now, dof, g.dof)?;
        let r = g.inner.iterate(&q, cloud, now)?;
        write_out(
            info,
            RampIterationInfo {
                generation: r.trajectory.generation,
                horizon: r.horizon,
                waypoints: r.trajectory.waypoints.len(),
                trajectory_min_csdf: r.trajectory_min_csdf,
                feasible_fraction: r.feasible_fraction,
                cloud_empty: i32::from(r.cloud_empty),
            },
        );
        Ok(())
    })
}

/// Copies the latest published trajectory (row-major, `waypoints x dof`).
/// `waypoints` receives the count; `BufferTooSmall` if `cap_values` is less
/// than `waypoints * dof`. Fails with `InvalidInput` before the first iteration.
#[no_mangle]
pub unsafe extern "C" fn ramp_generator_trajectory(
    generator: *const RampGenerator,
    out: *mut f64,
    cap_values: usize,
    waypoints: *mut usize,
) -> RampStatus {
    guard(|| {
        let g = deref(generator, "generator")?;
        let traj = g
            .inner
            .latest()
            .ok_or_else(|| fail(RampStatus::InvalidInput, "no trajectory has been published yet"))?;
        let n = traj.waypoints.len();
        write_out(waypoints, n);
        if n * g.dof > cap_values {
            return Err(fail(
                RampStatus::BufferTooSmall,
                format!("{} values do not fit in {cap_values}", n * g.dof),
            ));
        }
        if out.is_null() {
            return Err(fail(RampStatus::NullPointer, "out is null"));
        }
        for (k, w) in traj.waypoints.iter().enumerate() {
            ptr::copy_nonoverlapping(w.as_ptr(), out.add(k * g.dof), g.dof);
        }
        Ok(())
    })
}

/// New follower. `follower_json` and `csdf_params` may be null for defaults.
#[no_mangle]
pub unsafe extern "C" fn ramp_follower_new(
    chain: *const RampChain,
    follower_json: *const c_char,
    csdf_params_: *const RampCsdfParams,
    out: *mut *mut RampFollower,
) -> RampStatus {
    guard(|| {
        let chain = &deref(chain, "chain")?.0;
        let params: FollowerParams = parse_json(opt_str(follower_json, "follower_json")?, "follower_json")?;
        let csdf = csdf_params(csdf_params_)?;
        let out = deref_mut(out, "out")?;
        let inner = Follower::new(chain.clone(), params, csdf)?;
        *out = Box::into_raw(Box::new(RampFollower {
            inner,
            dof: chain.dof(),
        }));
        Ok(())
    })
}

#[no_mangle]
pub unsafe extern "C" fn ramp_follower_free(follower: *mut RampFollower) {
    if !follower.is_null() {
        drop(Box::from_raw(follower));
    }
}

/// One control tick at `q`. The reference is the latest trajectory of
/// `generator` (may be null to keep the current one). Writes the velocity
/// command into `u` (length `dof`); `info` may be null.
#[no_mangle]
pub unsafe extern "C" fn ramp_follower_tick(
    follower: *mut RampFollower,
    q: *const f64,
    dof: usize,
    generator: *const RampGenerator,
    cloud: *const RampCloud,
    u: *mut f64,
    info: *mut RampTickInfo,
) -> RampStatus {
    guard(|| {
        let f = deref_mut(follower, "follower")?;
        let cloud = &deref(cloud, "cloud")?.0;
        let q = configuration(q, dof, f.dof)?;
        if u.is_null() {
            return Err(fail(RampStatus::NullPointer, "u is null"));
        }
        let latest = match generator.as_ref() {
            Some(g) => g.inner.latest().cloned(),
            None => None,
        };
        let out = f.inner.tick(&q, latest.as_deref(), cloud)?;
        ptr::copy_nonoverlapping(out.u.as_ptr(), u, dof);
        let d = &out.diagnostics;
        write_out(
            info,
            RampTickInfo {
                csdf: d.csdf.unwrap_or(f64::NAN),
                s_star: d.s_star,
                u_norm: d.u_norm,
                h: d.h.unwrap_or(f64::NAN),
                generation: d.generation,
                at_goal: i32::from(d.at_goal),
                degenerate_gradient: i32::from(d.degenerate_gradient),
            },
        );
        Ok(())
    })
}
