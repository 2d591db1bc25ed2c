//! C interface to `tdoa-core`.
//!
//! Objects are opaque handles created by `*_new` / producing functions and
//! released with the matching `*_free`. Every fallible function returns a
//! [`TdoaStatus`]; on failure a message is available from
//! [`tdoa_last_error`] on the same thread. Arrays are passed as pointer and
//! length; points are stored row-major (`m × dim` doubles).

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use tdoa_core::acoustics::{self, EchoOptions, Room, Wall};
use tdoa_core::lateration::{self, SensorArray, SolveConfig, SolvePath, SolveResult};
use tdoa_core::matching::{self, MatchConfig, MatchReport, ReceptionTable};
use tdoa_core::Error;

/// Result codes of all fallible functions.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdoaStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    LengthMismatch = 3,
    DimensionMismatch = 4,
    NonFinite = 5,
    RankDeficient = 6,
    NotSpanning = 7,
    TheoremViolation = 8,
    NoRealSolution = 9,
    DegenerateMirror = 10,
    BudgetExceeded = 11,
    OutOfRange = 12,
    Panic = 13,
}

impl From<&Error> for TdoaStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::LengthMismatch { .. } => TdoaStatus::LengthMismatch,
            Error::DimensionMismatch { .. } => TdoaStatus::DimensionMismatch,
            Error::NonFinite(_) => TdoaStatus::NonFinite,
            Error::RankDeficient { .. } => TdoaStatus::RankDeficient,
            Error::NotSpanning { .. } => TdoaStatus::NotSpanning,
            Error::TheoremViolation => TdoaStatus::TheoremViolation,
            Error::NoRealSolution => TdoaStatus::NoRealSolution,
            Error::DegenerateMirror => TdoaStatus::DegenerateMirror,
            Error::BudgetExceeded { .. } => TdoaStatus::BudgetExceeded,
            Error::Invalid(_) => TdoaStatus::InvalidArgument,
        }
    }
}

struct Failure(TdoaStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(TdoaStatus::from(&e), e.to_string())
    }
}

fn fail<T>(status: TdoaStatus, msg: impl Into<String>) -> Result<T, Failure> {
    Err(Failure(status, msg.into()))
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

/// Runs `f`, converting errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> TdoaStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => TdoaStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(&format!("internal panic: {msg}"));
            TdoaStatus::Panic
        }
    }
}

fn non_null<T>(p: *const T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        fail(TdoaStatus::NullPointer, format!("{what} is null"))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null or point to `len` readable doubles.
unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, len))
}

/// # Safety
/// `p` must be null or a live handle of type `T`.
unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    non_null(p, what)?;
    Ok(&*p)
}

fn out<T>(dst: *mut T, value: T) {
    if !dst.is_null() {
        // SAFETY: non-null output pointers are required to be writable.
        unsafe { dst.write(value) };
    }
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// # Safety
/// `p` must be null or obtained from `Box::into_raw` and not freed before.
unsafe fn free<T>(p: *mut T) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn tdoa_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn tdoa_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Sensor positions.
pub struct TdoaSensorArray {
    inner: SensorArray,
}

/// Creates an array of `count` sensors in dimension `dim` from `count × dim`
/// row-major coordinates.
///
/// # Safety
/// `coords` must point to `count * dim` doubles; `out_array` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdoa_sensor_array_new(
    dim: usize,
    count: usize,
    coords: *const f64,
    out_array: *mut *mut TdoaSensorArray,
) -> TdoaStatus {
    guard(|| {
        non_null(out_array, "out_array")?;
        let total = dim
            .checked_mul(count)
            .ok_or_else(|| Failure(TdoaStatus::InvalidArgument, "size overflow".into()))?;
        let data = slice(coords, total, "coords")?;
        if dim == 0 {
            return fail(TdoaStatus::InvalidArgument, "dimension must be positive");
        }
        let positions = data.chunks(dim).map(<[f64]>::to_vec).collect();
        let inner = SensorArray::new(positions)?;
        out_array.write(boxed(TdoaSensorArray { inner }));
        Ok(())
    })
}

/// # Safety
/// `array` must be null or a handle from [`tdoa_sensor_array_new`].
#[no_mangle]
pub unsafe extern "C" fn tdoa_sensor_array_free(array: *mut TdoaSensorArray) {
    free(array);
}

/// Spatial dimension, or 0 for a null handle.
///
/// # Safety
/// `array` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tdoa_sensor_array_dim(array: *const TdoaSensorArray) -> usize {
    array.as_ref().map_or(0, |a| a.inner.dim())
}

/// Number of sensors, or 0 for a null handle.
///
/// # Safety
/// `array` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tdoa_sensor_array_len(array: *const TdoaSensorArray) -> usize {
    array.as_ref().map_or(0, |a| a.inner.len())
}

/// Geometry summary. `condition_ok` receives 1, 0, or -1 when the
/// sign-pattern condition does not apply (sensor count other than dim + 2).
///
/// # Safety
/// `array` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn tdoa_check_geometry(
    array: *const TdoaSensorArray,
    tol: f64,
    noncoplanar: *mut i32,
    condition_ok: *mut i32,
    failing_patterns: *mut usize,
) -> TdoaStatus {
    guard(|| {
        let a = handle(array, "array")?;
        if !(tol > 0.0 && tol < 1.0) {
            return fail(TdoaStatus::InvalidArgument, "tolerance must lie in (0, 1)");
        }
        let g = lateration::check_geometry(&a.inner, tol);
        out(noncoplanar, i32::from(g.noncoplanar));
        out(condition_ok, g.condition_ok.map_or(-1, i32::from));
        out(failing_patterns, g.failing_sign_patterns.len());
        Ok(())
    })
}

/// Candidates of one closed-form solve.
pub struct TdoaSolveResult {
    inner: SolveResult,
}

/// Which solver route produced a result.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TdoaSolvePath {
    FullRank = 0,
    Quadratic = 1,
}

/// Solves for the emission event of `count` reception times (one per
/// sensor). A non-positive `rank_tol` selects the default.
///
/// # Safety
/// `array` must be a live handle, `times` must point to `count` doubles and
/// `out_result` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdoa_solve(
    array: *const TdoaSensorArray,
    times: *const f64,
    count: usize,
    rank_tol: f64,
    out_result: *mut *mut TdoaSolveResult,
) -> TdoaStatus {
    guard(|| {
        let a = handle(array, "array")?;
        non_null(out_result, "out_result")?;
        let t = slice(times, count, "times")?;
        let mut cfg = SolveConfig::default();
        if rank_tol > 0.0 {
            cfg.rank_tol = rank_tol;
        }
        let inner = lateration::solve(&a.inner, t, &cfg)?;
        out_result.write(boxed(TdoaSolveResult { inner }));
        Ok(())
    })
}

/// # Safety
/// `result` must be null or a handle from [`tdoa_solve`].
#[no_mangle]
pub unsafe extern "C" fn tdoa_solve_result_free(result: *mut TdoaSolveResult) {
    free(result);
}

/// # Safety
/// `result` must be a live handle; output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn tdoa_solve_result_info(
    result: *const TdoaSolveResult,
    path: *mut TdoaSolvePath,
    rank_of_a: *mut usize,
    candidates: *mut usize,
) -> TdoaStatus {
    guard(|| {
        let r = &handle(result, "result")?.inner;
        out(
            path,
            match r.path {
                SolvePath::FullRank => TdoaSolvePath::FullRank,
                SolvePath::Quadratic => TdoaSolvePath::Quadratic,
            },
        );
        out(rank_of_a, r.rank_of_a);
        out(candidates, r.candidates.len());
        Ok(())
    })
}

/// Candidate `index` (ascending emission time). `position` must hold `dim`
/// doubles.
///
/// # Safety
/// `result` must be a live handle; `position` must be null or writable for
/// `dim` doubles; other output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn tdoa_solve_result_candidate(
    result: *const TdoaSolveResult,
    index: usize,
    time: *mut f64,
    position: *mut f64,
    spurious: *mut i32,
) -> TdoaStatus {
    guard(|| {
        let r = &handle(result, "result")?.inner;
        let Some(c) = r.candidates.get(index) else {
            return fail(TdoaStatus::OutOfRange, format!("candidate {index} out of range"));
        };
        out(time, c.event.time);
        if !position.is_null() {
            ptr::copy_nonoverlapping(c.event.position.as_ptr(), position, c.event.position.len());
        }
        out(spurious, i32::from(c.spurious));
        Ok(())
    })
}

/// Per-sensor reception lists.
pub struct TdoaReceptionTable {
    inner: ReceptionTable,
}

/// Creates a table with `sensors` empty lists.
///
/// # Safety
/// `out_table` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdoa_reception_table_new(
    sensors: usize,
    out_table: *mut *mut TdoaReceptionTable,
) -> TdoaStatus {
    guard(|| {
        non_null(out_table, "out_table")?;
        let inner = ReceptionTable::new(vec![Vec::new(); sensors])?;
        out_table.write(boxed(TdoaReceptionTable { inner }));
        Ok(())
    })
}

/// Adds a reception time to a sensor's list; near-duplicates are merged.
///
/// # Safety
/// `table` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tdoa_reception_table_push(
    table: *mut TdoaReceptionTable,
    sensor: usize,
    time: f64,
) -> TdoaStatus {
    guard(|| {
        non_null(table, "table")?;
        let t = &mut (*table).inner;
        if sensor >= t.sensors() {
            return fail(TdoaStatus::OutOfRange, format!("no sensor {sensor}"));
        }
        t.insert(sensor, time)?;
        Ok(())
    })
}

/// Number of times recorded for `sensor`, or 0 if out of range.
///
/// # Safety
/// `table` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tdoa_reception_table_len(table: *const TdoaReceptionTable, sensor: usize) -> usize {
    table
        .as_ref()
        .and_then(|t| t.inner.lists().get(sensor))
        .map_or(0, Vec::len)
}

/// # Safety
/// `table` must be null or a handle from this library.
#[no_mangle]
pub unsafe extern "C" fn tdoa_reception_table_free(table: *mut TdoaReceptionTable) {
    free(table);
}

/// Matching parameters; obtain defaults from [`tdoa_match_config_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TdoaMatchConfig {
    pub residual_threshold: f64,
    pub rank_tol: f64,
    /// Fit tolerance relative to the sensor diameter; non-positive disables
    /// the fit check.
    pub fit_tol_rel: f64,
    pub keep_ambiguous: i32,
    pub budget: u64,
}

#[no_mangle]
pub extern "C" fn tdoa_match_config_default() -> TdoaMatchConfig {
    let d = MatchConfig::default();
    TdoaMatchConfig {
        residual_threshold: d.residual_threshold,
        rank_tol: d.solve.rank_tol,
        fit_tol_rel: d.fit_tol_rel.unwrap_or(0.0),
        keep_ambiguous: i32::from(d.keep_ambiguous),
        budget: u64::try_from(d.budget).unwrap_or(u64::MAX),
    }
}

fn match_config(c: Option<&TdoaMatchConfig>) -> MatchConfig {
    let Some(c) = c else {
        return MatchConfig::default();
    };
    MatchConfig {
        residual_threshold: c.residual_threshold,
        solve: SolveConfig {
            rank_tol: c.rank_tol,
            ..SolveConfig::default()
        },
        fit_tol_rel: (c.fit_tol_rel > 0.0).then_some(c.fit_tol_rel),
        keep_ambiguous: c.keep_ambiguous != 0,
        budget: u128::from(c.budget),
        ..MatchConfig::default()
    }
}

/// Detected events of a matching run.
pub struct TdoaMatchReport {
    inner: MatchReport,
}

/// Runs event matching. A null `config` uses the defaults.
///
/// # Safety
/// `array` and `table` must be live handles; `config` may be null;
/// `out_report` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdoa_match_events(
    array: *const TdoaSensorArray,
    table: *const TdoaReceptionTable,
    config: *const TdoaMatchConfig,
    out_report: *mut *mut TdoaMatchReport,
) -> TdoaStatus {
    guard(|| {
        let a = handle(array, "array")?;
        let t = handle(table, "table")?;
        non_null(out_report, "out_report")?;
        let inner = matching::match_events(&a.inner, &t.inner, &match_config(config.as_ref()))?;
        out_report.write(boxed(TdoaMatchReport { inner }));
        Ok(())
    })
}

/// # Safety
/// `report` must be null or a handle from [`tdoa_match_events`].
#[no_mangle]
pub unsafe extern "C" fn tdoa_match_report_free(report: *mut TdoaMatchReport) {
    free(report);
}

/// Tuple counters of a report. Output pointers may be null.
///
/// # Safety
/// `report` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn tdoa_match_report_counts(
    report: *const TdoaMatchReport,
    events: *mut usize,
    candidate_tuples: *mut u64,
    rejected_tuples: *mut u64,
    accepted_tuples: *mut u64,
) -> TdoaStatus {
    guard(|| {
        let r = &handle(report, "report")?.inner;
        let clamp = |v: u128| u64::try_from(v).unwrap_or(u64::MAX);
        out(events, r.events.len());
        out(candidate_tuples, clamp(r.candidate_tuples));
        out(rejected_tuples, clamp(r.rejected_tuples));
        out(accepted_tuples, clamp(r.accepted_tuples));
        Ok(())
    })
}

/// Event `index` in (time, position) order. `position` must hold `dim`
/// doubles.
///
/// # Safety
/// `report` must be a live handle; `position` must be null or writable for
/// `dim` doubles; other output pointers may be null.
#[no_mangle]
pub unsafe extern "C" fn tdoa_match_report_event(
    report: *const TdoaMatchReport,
    index: usize,
    time: *mut f64,
    position: *mut f64,
    residual: *mut f64,
    ambiguous: *mut i32,
) -> TdoaStatus {
    guard(|| {
        let r = &handle(report, "report")?.inner;
        let Some(e) = r.events.get(index) else {
            return fail(TdoaStatus::OutOfRange, format!("event {index} out of range"));
        };
        out(time, e.event.time);
        if !position.is_null() {
            ptr::copy_nonoverlapping(e.event.position.as_ptr(), position, e.event.position.len());
        }
        out(residual, e.residual);
        out(ambiguous, i32::from(e.ambiguous));
        Ok(())
    })
}

/// Planar walls and a loudspeaker.
pub struct TdoaRoom {
    inner: Room,
}

/// Creates a room from `wall_count` normals (`wall_count × dim`, row-major)
/// and offsets; wall `k` is `{p : normal_k · p = offset_k}`.
///
/// # Safety
/// `loudspeaker` must hold `dim` doubles, `normals` `wall_count * dim`,
/// `offsets` `wall_count`; `out_room` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdoa_room_new(
    dim: usize,
    loudspeaker: *const f64,
    wall_count: usize,
    normals: *const f64,
    offsets: *const f64,
    out_room: *mut *mut TdoaRoom,
) -> TdoaStatus {
    guard(|| {
        non_null(out_room, "out_room")?;
        if dim == 0 {
            return fail(TdoaStatus::InvalidArgument, "dimension must be positive");
        }
        let ls = slice(loudspeaker, dim, "loudspeaker")?;
        let total = wall_count
            .checked_mul(dim)
            .ok_or_else(|| Failure(TdoaStatus::InvalidArgument, "size overflow".into()))?;
        let ns = slice(normals, total, "normals")?;
        let os = slice(offsets, wall_count, "offsets")?;
        let walls = ns
            .chunks(dim)
            .zip(os)
            .map(|(n, &o)| Wall::new(n.to_vec(), o))
            .collect::<Result<Vec<_>, _>>()?;
        let inner = Room::new(walls, ls.to_vec())?;
        out_room.write(boxed(TdoaRoom { inner }));
        Ok(())
    })
}

/// # Safety
/// `room` must be null or a handle from [`tdoa_room_new`].
#[no_mangle]
pub unsafe extern "C" fn tdoa_room_free(room: *mut TdoaRoom) {
    free(room);
}

/// Simulates first-order echoes (and optionally the direct sound) into a new
/// reception table.
///
/// # Safety
/// `room` and `array` must be live handles; `out_table` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdoa_simulate_echoes(
    room: *const TdoaRoom,
    array: *const TdoaSensorArray,
    emission_time: f64,
    include_direct: i32,
    out_table: *mut *mut TdoaReceptionTable,
) -> TdoaStatus {
    guard(|| {
        let r = handle(room, "room")?;
        let a = handle(array, "array")?;
        non_null(out_table, "out_table")?;
        let opts = EchoOptions {
            include_direct: include_direct != 0,
            ..EchoOptions::default()
        };
        let inner = acoustics::simulate_echoes(&r.inner, &a.inner, emission_time, &opts)?;
        out_table.write(boxed(TdoaReceptionTable { inner }));
        Ok(())
    })
}

/// Walls recovered from echoes.
pub struct TdoaWallList {
    walls: Vec<Wall>,
    direct: Option<f64>,
}

/// Detects walls given the loudspeaker position `source` (`dim` doubles).
/// A null `config` uses the defaults.
///
/// # Safety
/// `array` and `table` must be live handles; `source` must hold `dim`
/// doubles; `config` may be null; `out_walls` must be writable.
#[no_mangle]
pub unsafe extern "C" fn tdoa_detect_walls(
    array: *const TdoaSensorArray,
    table: *const TdoaReceptionTable,
    source: *const f64,
    config: *const TdoaMatchConfig,
    out_walls: *mut *mut TdoaWallList,
) -> TdoaStatus {
    guard(|| {
        let a = handle(array, "array")?;
        let t = handle(table, "table")?;
        non_null(out_walls, "out_walls")?;
        let src = slice(source, a.inner.dim(), "source")?;
        let det = acoustics::detect_walls(&a.inner, &t.inner, src, &match_config(config.as_ref()))?;
        out_walls.write(boxed(TdoaWallList {
            walls: det.walls.into_iter().map(|w| w.wall).collect(),
            direct: det.direct.map(|d| d.event.time),
        }));
        Ok(())
    })
}

/// # Safety
/// `walls` must be null or a handle from [`tdoa_detect_walls`].
#[no_mangle]
pub unsafe extern "C" fn tdoa_wall_list_free(walls: *mut TdoaWallList) {
    free(walls);
}

/// Number of walls, or 0 for a null handle.
///
/// # Safety
/// `walls` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tdoa_wall_list_len(walls: *const TdoaWallList) -> usize {
    walls.as_ref().map_or(0, |w| w.walls.len())
}

/// Emission time of the direct sound; returns 0 when it was not detected.
///
/// # Safety
/// `walls` must be null or a live handle; `time` may be null.
#[no_mangle]
pub unsafe extern "C" fn tdoa_wall_list_direct(walls: *const TdoaWallList, time: *mut f64) -> i32 {
    match walls.as_ref().and_then(|w| w.direct) {
        Some(t) => {
            out(time, t);
            1
        }
        None => 0,
    }
}

/// Wall `index` as unit normal (`dim` doubles) and offset.
///
/// # Safety
/// `walls` must be a live handle; `normal` must be null or writable for
/// `dim` doubles; `offset` may be null.
#[no_mangle]
pub unsafe extern "C" fn tdoa_wall_list_get(
    walls: *const TdoaWallList,
    index: usize,
    normal: *mut f64,
    offset: *mut f64,
) -> TdoaStatus {
    guard(|| {
        let w = handle(walls, "walls")?;
        let Some(wall) = w.walls.get(index) else {
            return fail(TdoaStatus::OutOfRange, format!("wall {index} out of range"));
        };
        if !normal.is_null() {
            ptr::copy_nonoverlapping(wall.normal().as_ptr(), normal, wall.dim());
        }
        out(offset, wall.offset());
        Ok(())
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_mapping() {
        assert_eq!(TdoaStatus::from(&Error::TheoremViolation), TdoaStatus::TheoremViolation);
        assert_eq!(
            TdoaStatus::from(&Error::Invalid(String::new())),
            TdoaStatus::InvalidArgument
        );
        assert_eq!(TdoaStatus::Ok as i32, 0);
    }

    #[test]
    fn panics_become_status() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, TdoaStatus::Panic);
        let msg = unsafe { CStr::from_ptr(tdoa_last_error()) }.to_str().unwrap();
        assert!(msg.contains("boom"));
    }

    #[test]
    fn default_config_round_trips() {
        let c = tdoa_match_config_default();
        assert_eq!(match_config(Some(&c)), MatchConfig::default());
    }
}
