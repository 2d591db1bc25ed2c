//! Walls from first-order echoes.
//!
//! Under ray acoustics an echo off a planar wall arrives as if it had been
//! emitted, at the same instant as the original sound, from the loudspeaker's
//! mirror image in that wall. Matching the echoes therefore yields the mirror
//! points, and each mirror point determines its wall as the perpendicular
//! bisector between it and the loudspeaker.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::lateration::SensorArray;
use crate::matching::{match_events, DetectedEvent, MatchConfig, MatchReport, ReceptionTable};
use crate::numkernel::{dist, dot, norm};
use crate::relations::{build_d, relation_residual};

/// Minimum distance between the loudspeaker and any wall or mirror point.
pub const MIN_SEPARATION: f64 = 1e-9;

/// Oriented hyperplane `{p : normal·p = offset}` with unit normal.
///
/// Constructors normalize the normal and flip the orientation so that its
/// first non-zero component is positive; two walls describing the same plane
/// therefore have the same representation.
#[derive(Debug, Clone, PartialEq)]
pub struct Wall {
    normal: Vec<f64>,
    offset: f64,
}

impl Wall {
    pub fn new(normal: Vec<f64>, offset: f64) -> Result<Self> {
        if normal.len() < 2 {
            return Err(Error::Invalid("wall normal needs at least 2 components".into()));
        }
        if normal.iter().any(|v| !v.is_finite()) || !offset.is_finite() {
            return Err(Error::NonFinite("wall"));
        }
        let len = norm(&normal);
        if len == 0.0 {
            return Err(Error::Invalid("wall normal is zero".into()));
        }
        let mut normal: Vec<f64> = normal.iter().map(|v| v / len).collect();
        let mut offset = offset / len;
        let leading = normal.iter().copied().find(|v| v.abs() > 1e-12).unwrap_or(1.0);
        if leading < 0.0 {
            normal.iter_mut().for_each(|v| *v = -*v);
            offset = -offset;
        }
        Ok(Self { normal, offset })
    }

    pub fn normal(&self) -> &[f64] {
        &self.normal
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    pub fn dim(&self) -> usize {
        self.normal.len()
    }

    /// Signed distance of `p` from the plane.
    pub fn signed_distance(&self, p: &[f64]) -> f64 {
        dot(&self.normal, p) - self.offset
    }

    /// Angle between normals (radians) and offset difference.
    pub fn deviation(&self, other: &Wall) -> (f64, f64) {
        let c = dot(&self.normal, &other.normal).clamp(-1.0, 1.0);
        // acos is ill-conditioned near 1; use the chord instead
        let chord = dist(&self.normal, &other.normal);
        let angle = if c > 0.9 { 2.0 * (0.5 * chord).asin() } else { c.acos() };
        (angle, (self.offset - other.offset).abs())
    }

    pub fn approx_eq(&self, other: &Wall, angle_tol: f64, offset_tol: f64) -> bool {
        let (a, o) = self.deviation(other);
        self.dim() == other.dim() && a <= angle_tol && o <= offset_tol
    }
}

/// Walls plus a loudspeaker position.
#[derive(Debug, Clone, PartialEq)]
pub struct Room {
    walls: Vec<Wall>,
    loudspeaker: Vec<f64>,
}

impl Room {
    pub fn new(walls: Vec<Wall>, loudspeaker: Vec<f64>) -> Result<Self> {
        if loudspeaker.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("loudspeaker"));
        }
        for (i, w) in walls.iter().enumerate() {
            if w.dim() != loudspeaker.len() {
                return Err(Error::DimensionMismatch {
                    expected: loudspeaker.len(),
                    actual: w.dim(),
                });
            }
            if w.signed_distance(&loudspeaker).abs() <= MIN_SEPARATION {
                return Err(Error::Invalid(format!("loudspeaker lies on wall {i}")));
            }
        }
        Ok(Self { walls, loudspeaker })
    }

    pub fn walls(&self) -> &[Wall] {
        &self.walls
    }

    pub fn loudspeaker(&self) -> &[f64] {
        &self.loudspeaker
    }

    pub fn dim(&self) -> usize {
        self.loudspeaker.len()
    }

    pub fn mirror_points(&self) -> Vec<Vec<f64>> {
        self.walls.iter().map(|w| mirror_point(w, &self.loudspeaker)).collect()
    }

    /// Mirror points with a common emission time.
    pub fn echo_scene(&self, emission_time: f64) -> EchoScene {
        let mut pts: Vec<Vec<f64>> = Vec::new();
        for p in self.mirror_points() {
            if !pts.iter().any(|q| dist(q, &p) <= MIN_SEPARATION) {
                pts.push(p);
            }
        }
        EchoScene {
            mirror_points: pts,
            emission_time,
        }
    }
}

/// Virtual sources that all emit at `emission_time`.
#[derive(Debug, Clone, PartialEq)]
pub struct EchoScene {
    pub mirror_points: Vec<Vec<f64>>,
    pub emission_time: f64,
}

/// Reflection of `source` in `wall`.
pub fn mirror_point(wall: &Wall, source: &[f64]) -> Vec<f64> {
    let s = 2.0 * wall.signed_distance(source);
    source.iter().zip(&wall.normal).map(|(p, n)| p - s * n).collect()
}

/// The wall whose mirror image of `source` is `mirror`.
pub fn wall_from_mirror(source: &[f64], mirror: &[f64]) -> Result<Wall> {
    if source.len() != mirror.len() {
        return Err(Error::DimensionMismatch {
            expected: source.len(),
            actual: mirror.len(),
        });
    }
    if dist(source, mirror) <= MIN_SEPARATION {
        return Err(Error::DegenerateMirror);
    }
    let normal: Vec<f64> = mirror.iter().zip(source).map(|(m, s)| m - s).collect();
    let mid: Vec<f64> = mirror.iter().zip(source).map(|(m, s)| 0.5 * (m + s)).collect();
    let len = norm(&normal);
    let unit: Vec<f64> = normal.iter().map(|v| v / len).collect();
    let offset = dot(&unit, &mid);
    Wall::new(unit, offset)
}

/// Options for [`simulate_echoes`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EchoOptions {
    /// Also record the direct sound from the loudspeaker.
    pub include_direct: bool,
    /// `(wall, sensor)` pairs whose echo is not received.
    pub dropout: Vec<(usize, usize)>,
    /// Extra registrations `(sensor, time)`.
    pub spurious: Vec<(usize, f64)>,
}

/// Reception times of all first-order echoes (and optionally the direct
/// sound) at every sensor.
pub fn simulate_echoes(
    room: &Room,
    sensors: &SensorArray,
    emission_time: f64,
    options: &EchoOptions,
) -> Result<ReceptionTable> {
    if sensors.dim() != room.dim() {
        return Err(Error::DimensionMismatch {
            expected: room.dim(),
            actual: sensors.dim(),
        });
    }
    let m = sensors.len();
    for &(w, s) in &options.dropout {
        if w >= room.walls.len() || s >= m {
            return Err(Error::Invalid(format!("dropout ({w}, {s}) out of range")));
        }
    }
    let mut lists = vec![Vec::new(); m];
    let mirrors = room.mirror_points();
    for (i, a) in sensors.positions().iter().enumerate() {
        if options.include_direct {
            lists[i].push(emission_time + dist(a, &room.loudspeaker));
        }
        for (w, p) in mirrors.iter().enumerate() {
            if !options.dropout.contains(&(w, i)) {
                lists[i].push(emission_time + dist(a, p));
            }
        }
    }
    for &(s, t) in &options.spurious {
        let list = lists
            .get_mut(s)
            .ok_or_else(|| Error::Invalid(format!("spurious registration for missing sensor {s}")))?;
        list.push(t);
    }
    ReceptionTable::new(lists)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectedWall {
    pub wall: Wall,
    /// The matched mirror point event.
    pub source: DetectedEvent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WallDetection {
    pub walls: Vec<DetectedWall>,
    /// Event found at the loudspeaker itself.
    pub direct: Option<DetectedEvent>,
    pub report: MatchReport,
}

/// Matches echoes and converts each detected mirror point into a wall.
///
/// An event within `max(1e-9, dedup distance)` of `source` is the direct
/// sound. Walls are returned in canonical orientation, deduplicated.
pub fn detect_walls(
    sensors: &SensorArray,
    table: &ReceptionTable,
    source: &[f64],
    config: &MatchConfig,
) -> Result<WallDetection> {
    if source.len() != sensors.dim() {
        return Err(Error::DimensionMismatch {
            expected: sensors.dim(),
            actual: source.len(),
        });
    }
    let report = match_events(sensors, table, config)?;
    let pos_eps = config.pos_eps_for(sensors).max(MIN_SEPARATION);
    let mut walls: Vec<DetectedWall> = Vec::new();
    let mut direct = None;
    for ev in &report.events {
        if dist(&ev.event.position, source) <= pos_eps {
            direct.get_or_insert_with(|| ev.clone());
            continue;
        }
        let wall = wall_from_mirror(source, &ev.event.position)?;
        let offset_eps = pos_eps;
        if !walls.iter().any(|w| w.wall.approx_eq(&wall, 1e-9, offset_eps)) {
            walls.push(DetectedWall {
                wall,
                source: ev.clone(),
            });
        }
    }
    Ok(WallDetection { walls, direct, report })
}

/// Tolerances used to compare detected walls with the truth.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WallTolerance {
    /// Radians.
    pub angle: f64,
    /// Relative to the sensor diameter.
    pub offset_rel: f64,
}

impl Default for WallTolerance {
    fn default() -> Self {
        Self {
            angle: 1e-6,
            offset_rel: 1e-6,
        }
    }
}

/// Comparison of detected walls with the true ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WallScore {
    pub recovered: usize,
    pub missed: usize,
    pub ghosts: usize,
}

pub fn score_walls(truth: &[Wall], found: &[Wall], sensors: &SensorArray, tol: &WallTolerance) -> WallScore {
    let offset_tol = tol.offset_rel * sensors.diameter();
    let hit = |a: &Wall, b: &Wall| a.approx_eq(b, tol.angle, offset_tol);
    let recovered = truth.iter().filter(|t| found.iter().any(|f| hit(t, f))).count();
    let ghosts = found.iter().filter(|f| !truth.iter().any(|t| hit(t, f))).count();
    WallScore {
        recovered,
        missed: truth.len() - recovered,
        ghosts,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GoodnessConfig {
    pub matching: MatchConfig,
    pub tolerance: WallTolerance,
    /// Standard deviation of the per-trial sensor perturbation, relative to
    /// the sensor diameter.
    pub perturbation: f64,
    pub include_direct: bool,
}

impl Default for GoodnessConfig {
    fn default() -> Self {
        Self {
            matching: MatchConfig::default(),
            tolerance: WallTolerance::default(),
            perturbation: 0.05,
            include_direct: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GoodnessReport {
    pub trials: usize,
    /// Ghost walls summed over all trials.
    pub ghost_walls_found: usize,
    pub trials_with_ghosts: usize,
    /// Real walls that a trial failed to recover, summed over trials.
    pub missed_walls: usize,
    /// Trials whose sensors were unusable (e.g. the perturbation collapsed them).
    pub failed_trials: usize,
    /// Smallest relation residual over all mixed assignments of mirror
    /// points to sensors for the unperturbed array; `None` with fewer than
    /// two distinct mirror points.
    pub min_mixed_residual: Option<f64>,
    /// The margin is at or below the acceptance threshold, so some mixed
    /// assignment would be accepted as an event.
    pub margin_flagged: bool,
}

/// Minimum relation residual over assignments `(s_1, …, s_m)` of mirror
/// points to sensors that are not all equal.
pub fn min_mixed_residual(scene: &EchoScene, sensors: &SensorArray) -> Option<f64> {
    let k = scene.mirror_points.len();
    let m = sensors.len();
    if k < 2 {
        return None;
    }
    let dists: Vec<Vec<f64>> = sensors
        .positions()
        .iter()
        .map(|a| scene.mirror_points.iter().map(|s| dist(a, s)).collect())
        .collect();
    let mut idx = vec![0usize; m];
    let mut best = f64::INFINITY;
    let mut times = vec![0.0; m];
    loop {
        if idx.iter().any(|&i| i != idx[0]) {
            for (i, t) in times.iter_mut().enumerate() {
                *t = scene.emission_time + dists[i][idx[i]];
            }
            if let Ok(d) = build_d(sensors, &times) {
                best = best.min(relation_residual(&d));
            }
        }
        let mut level = m;
        loop {
            if level == 0 {
                return Some(best);
            }
            level -= 1;
            idx[level] += 1;
            if idx[level] < k {
                break;
            }
            idx[level] = 0;
        }
    }
}

/// Empirical check that a sensor placement produces no ghost walls.
///
/// Trial 0 uses `sensors` as given; each further trial perturbs every sensor
/// by an independent Gaussian offset. Each trial simulates the echoes,
/// detects walls and compares them with the room.
pub fn goodness_check(
    room: &Room,
    sensors: &SensorArray,
    trials: usize,
    rng_seed: u64,
    config: &GoodnessConfig,
) -> Result<GoodnessReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let sigma = config.perturbation * sensors.diameter();
    let options = EchoOptions {
        include_direct: config.include_direct,
        ..EchoOptions::default()
    };
    let mut report = GoodnessReport {
        trials,
        ghost_walls_found: 0,
        trials_with_ghosts: 0,
        missed_walls: 0,
        failed_trials: 0,
        min_mixed_residual: min_mixed_residual(&room.echo_scene(0.0), sensors),
        margin_flagged: false,
    };
    report.margin_flagged = report
        .min_mixed_residual
        .is_some_and(|r| r <= config.matching.residual_threshold);

    for trial in 0..trials {
        let trial_sensors = if trial == 0 {
            sensors.clone()
        } else {
            let perturbed = sensors
                .positions()
                .iter()
                .map(|p| {
                    p.iter()
                        .map(|x| x + sigma * rng.sample::<f64, _>(StandardNormal))
                        .collect()
                })
                .collect();
            match SensorArray::new(perturbed) {
                Ok(s) => s,
                Err(_) => {
                    report.failed_trials += 1;
                    continue;
                }
            }
        };
        let table = simulate_echoes(room, &trial_sensors, 0.0, &options)?;
        let detection = match detect_walls(&trial_sensors, &table, room.loudspeaker(), &config.matching) {
            Ok(d) => d,
            Err(e) if e.is_numeric() => {
                report.failed_trials += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        let found: Vec<Wall> = detection.walls.iter().map(|w| w.wall.clone()).collect();
        let score = score_walls(room.walls(), &found, &trial_sensors, &config.tolerance);
        report.ghost_walls_found += score.ghosts;
        report.missed_walls += score.missed;
        report.trials_with_ghosts += usize::from(score.ghosts > 0);
    }
    Ok(report)
}
