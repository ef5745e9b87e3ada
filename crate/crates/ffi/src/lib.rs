//! C interface to the `cmppi` planners.
//!
//! Every function returns a [`CmppiStatus`]. On failure the message is kept
//! per thread and can be read with [`cmppi_last_error`]. Handles are opaque
//! and must be released with their `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::Arc;

use cmppi::cluster::{dbscan, DbscanParams, PointMatrix, Scaling};
use cmppi::dynamics::{dubins_step, DubinsModel, StateVec};
use cmppi::env::{Bounds, GoalCost, MapDocument, StaticMap};
use cmppi::harness::{run_episode, ExperimentConfig, Outcome};
use cmppi::mppi::compute_weights;
use cmppi::planner::{Controller, ObstacleObservation};
use cmppi::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmppiStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Data = 4,
    Generation = 5,
    Lookup = 6,
    Io = 7,
    BufferTooSmall = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmppiOutcome {
    ReachedGoal = 0,
    Collided = 1,
    Timeout = 2,
}

/// Summary of one closed-loop episode.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CmppiEpisodeSummary {
    pub outcome: CmppiOutcome,
    pub steps: u64,
    /// Negative when the episode never started.
    pub final_distance: f64,
    pub mean_step_ms: f64,
    /// Non-zero when the episode ended with an error note.
    pub had_error: u8,
}

/// Opaque receding-horizon planner.
pub struct CmppiPlanner {
    controller: Controller,
    cost: GoalCost,
    obstacles: Vec<ObstacleObservation>,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(message: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = message);
}

fn status_of(error: &Error) -> CmppiStatus {
    match error {
        Error::Config(_) | Error::Json(_) => CmppiStatus::Config,
        Error::Argument(_) => CmppiStatus::InvalidArgument,
        Error::Data(_) => CmppiStatus::Data,
        Error::Generation(_) => CmppiStatus::Generation,
        Error::Lookup(_) => CmppiStatus::Lookup,
        Error::Io(_) | Error::Csv(_) => CmppiStatus::Io,
    }
}

/// Run `f`, translating errors and panics into status codes.
fn guard<F: FnOnce() -> Result<(), CmppiStatus>>(f: F) -> CmppiStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CmppiStatus::Ok,
        Ok(Err(status)) => status,
        Err(payload) => {
            let message = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {message}"));
            CmppiStatus::Panic
        }
    }
}

fn fail(error: Error) -> CmppiStatus {
    let status = status_of(&error);
    set_error(error.to_string());
    status
}

fn null(name: &str) -> CmppiStatus {
    set_error(format!("{name} is null"));
    CmppiStatus::NullPointer
}

unsafe fn input<'a>(ptr: *const f64, len: usize, name: &str) -> Result<&'a [f64], CmppiStatus> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts(ptr, len))
}

unsafe fn output<'a, T>(ptr: *mut T, len: usize, name: &str) -> Result<&'a mut [T], CmppiStatus> {
    if len == 0 {
        return Ok(&mut []);
    }
    if ptr.is_null() {
        return Err(null(name));
    }
    Ok(slice::from_raw_parts_mut(ptr, len))
}

unsafe fn text<'a>(ptr: *const c_char, name: &str) -> Result<&'a str, CmppiStatus> {
    if ptr.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(format!("{name} is not valid UTF-8"));
        CmppiStatus::InvalidArgument
    })
}

/// Copy the calling thread's last error message into `buffer` as a
/// NUL-terminated string. Returns the message length in bytes, excluding
/// the terminator; the copy is truncated when `capacity` is too small.
///
/// # Safety
/// `buffer` must be null or valid for `capacity` bytes.
#[no_mangle]
pub unsafe extern "C" fn cmppi_last_error(buffer: *mut c_char, capacity: usize) -> usize {
    LAST_ERROR.with(|e| {
        let message = e.borrow();
        if !buffer.is_null() && capacity > 0 {
            let n = message.len().min(capacity - 1);
            ptr::copy_nonoverlapping(message.as_ptr(), buffer.cast::<u8>(), n);
            *buffer.add(n) = 0;
        }
        message.len()
    })
}

/// Normalized importance weights of `count` rollout costs.
///
/// # Safety
/// `costs` and `weights_out` must be valid for `count` elements.
#[no_mangle]
pub unsafe extern "C" fn cmppi_compute_weights(
    costs: *const f64,
    count: usize,
    lambda: f64,
    weights_out: *mut f64,
) -> CmppiStatus {
    guard(|| {
        let costs = input(costs, count, "costs")?;
        let out = output(weights_out, count, "weights_out")?;
        let w = compute_weights(costs, lambda).map_err(fail)?;
        out.copy_from_slice(w.as_slice());
        Ok(())
    })
}

/// DBSCAN over `count` row-major points of dimension `dim`. With `zscore`
/// non-zero every dimension is standardized first.
///
/// # Safety
/// `points` must hold `count * dim` values and `labels_out` `count` slots;
/// `cluster_count_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cmppi_dbscan(
    points: *const f64,
    count: usize,
    dim: usize,
    eps_radius: f64,
    min_pts: usize,
    zscore: u8,
    labels_out: *mut i64,
    cluster_count_out: *mut usize,
) -> CmppiStatus {
    guard(|| {
        let len = count.checked_mul(dim).ok_or_else(|| fail(Error::Argument("size overflow".into())))?;
        let data = input(points, len, "points")?.to_vec();
        let labels = output(labels_out, count, "labels_out")?;
        if cluster_count_out.is_null() {
            return Err(null("cluster_count_out"));
        }
        let matrix = PointMatrix::new(data, dim).map_err(fail)?;
        let params = DbscanParams {
            eps_radius,
            min_pts,
            scaling: if zscore != 0 { Scaling::ZScore } else { Scaling::Identity },
        };
        let clusters = dbscan(&matrix, &params).map_err(fail)?;
        labels.copy_from_slice(&clusters.labels);
        *cluster_count_out = clusters.count;
        Ok(())
    })
}

/// One exact step of the Dubins car from `state[3]` into `next_out[3]`.
///
/// # Safety
/// `state` and `next_out` must be valid for three values.
#[no_mangle]
pub unsafe extern "C" fn cmppi_dubins_step(
    state: *const f64,
    omega: f64,
    speed: f64,
    min_turn_radius: f64,
    dt: f64,
    next_out: *mut f64,
) -> CmppiStatus {
    guard(|| {
        let state = input(state, 3, "state")?;
        let out = output(next_out, 3, "next_out")?;
        let model = DubinsModel::new(speed, min_turn_radius, dt).map_err(fail)?;
        let next = dubins_step(&StateVec::new(state), omega, &model);
        out.copy_from_slice(&next);
        Ok(())
    })
}

/// Run one closed-loop episode described by a JSON experiment config.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `summary_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cmppi_run_episode(
    config_json: *const c_char,
    seed: u64,
    summary_out: *mut CmppiEpisodeSummary,
) -> CmppiStatus {
    guard(|| {
        let config = ExperimentConfig::from_json(text(config_json, "config_json")?).map_err(fail)?;
        if summary_out.is_null() {
            return Err(null("summary_out"));
        }
        let run = run_episode(&config, config.algorithm, seed, false).map_err(fail)?;
        let r = run.result;
        *summary_out = CmppiEpisodeSummary {
            outcome: match r.outcome {
                Outcome::ReachedGoal => CmppiOutcome::ReachedGoal,
                Outcome::Collided => CmppiOutcome::Collided,
                Outcome::Timeout => CmppiOutcome::Timeout,
            },
            steps: r.steps as u64,
            final_distance: r.final_distance.unwrap_or(-1.0),
            mean_step_ms: r.timing.mean_step_ms,
            had_error: r.error.is_some() as u8,
        };
        Ok(())
    })
}

/// Create a planner from a JSON experiment config. `map_json` is a map
/// document or null for unbounded free space.
///
/// # Safety
/// String arguments must be NUL-terminated (or null where allowed) and
/// `planner_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn cmppi_planner_new(
    config_json: *const c_char,
    map_json: *const c_char,
    goal_x: f64,
    goal_y: f64,
    planner_out: *mut *mut CmppiPlanner,
) -> CmppiStatus {
    guard(|| {
        if planner_out.is_null() {
            return Err(null("planner_out"));
        }
        let config = ExperimentConfig::from_json(text(config_json, "config_json")?).map_err(fail)?;
        let map = if map_json.is_null() {
            StaticMap::empty(Bounds::new(-1e9, -1e9, 1e9, 1e9))
        } else {
            serde_json::from_str::<MapDocument>(text(map_json, "map_json")?)
                .map_err(Error::from)
                .and_then(|doc| doc.to_static_map())
        }
        .map_err(fail)?;
        let model = config.model().map_err(fail)?;
        let controller = Controller::new(config.planner_settings(config.algorithm), model).map_err(fail)?;
        let planner = CmppiPlanner {
            controller,
            cost: GoalCost {
                goal: [goal_x, goal_y],
                alpha: config.alpha,
                map: Arc::new(map),
            },
            obstacles: Vec::new(),
        };
        *planner_out = Box::into_raw(Box::new(planner));
        Ok(())
    })
}

/// Release a planner. Null is ignored.
///
/// # Safety
/// `planner` must come from [`cmppi_planner_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn cmppi_planner_free(planner: *mut CmppiPlanner) {
    if !planner.is_null() {
        drop(Box::from_raw(planner));
    }
}

/// Replace the observed moving obstacles: `poses` holds `count` rows of
/// `[x, y, theta]`, `radii` one radius per obstacle.
///
/// # Safety
/// `planner` must be a live handle; the arrays must hold the stated counts.
#[no_mangle]
pub unsafe extern "C" fn cmppi_planner_set_obstacles(
    planner: *mut CmppiPlanner,
    poses: *const f64,
    radii: *const f64,
    count: usize,
) -> CmppiStatus {
    guard(|| {
        let planner = planner.as_mut().ok_or_else(|| null("planner"))?;
        let len = count.checked_mul(3).ok_or_else(|| fail(Error::Argument("size overflow".into())))?;
        let poses = input(poses, len, "poses")?;
        let radii = input(radii, count, "radii")?;
        planner.obstacles = poses
            .chunks_exact(3)
            .zip(radii)
            .map(|(p, &radius)| ObstacleObservation {
                pose: [p[0], p[1], p[2]],
                radius,
            })
            .collect();
        Ok(())
    })
}

/// Horizon length of the planner.
///
/// # Safety
/// `planner` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn cmppi_planner_horizon(planner: *const CmppiPlanner, horizon_out: *mut usize) -> CmppiStatus {
    guard(|| {
        let planner = planner.as_ref().ok_or_else(|| null("planner"))?;
        if horizon_out.is_null() {
            return Err(null("horizon_out"));
        }
        *horizon_out = planner.controller.settings().horizon;
        Ok(())
    })
}

/// Plan from `state[3]` and write the turning rate to apply now. The solution
/// is shifted into the warm start of the next call.
///
/// # Safety
/// `planner` must be a live handle; `state` valid for three values and
/// `control_out` for one.
#[no_mangle]
pub unsafe extern "C" fn cmppi_planner_step(
    planner: *mut CmppiPlanner,
    state: *const f64,
    seed: u64,
    control_out: *mut f64,
) -> CmppiStatus {
    guard(|| {
        let planner = planner.as_mut().ok_or_else(|| null("planner"))?;
        let state = input(state, 3, "state")?;
        let out = output(control_out, 1, "control_out")?;
        let step = planner
            .controller
            .plan(state, &planner.cost, &planner.obstacles, seed)
            .map_err(fail)?;
        out[0] = step.control[0];
        Ok(())
    })
}

/// Copy the current warm start (`horizon` turning rates) into `inputs_out`.
///
/// # Safety
/// `planner` must be a live handle and `inputs_out` valid for `capacity` values.
#[no_mangle]
pub unsafe extern "C" fn cmppi_planner_warm_start(
    planner: *const CmppiPlanner,
    inputs_out: *mut f64,
    capacity: usize,
) -> CmppiStatus {
    guard(|| {
        let planner = planner.as_ref().ok_or_else(|| null("planner"))?;
        let inputs = planner.controller.warm_start().inputs();
        if capacity < inputs.len() {
            set_error(format!("need {} slots, got {capacity}", inputs.len()));
            return Err(CmppiStatus::BufferTooSmall);
        }
        output(inputs_out, inputs.len(), "inputs_out")?.copy_from_slice(inputs);
        Ok(())
    })
}
