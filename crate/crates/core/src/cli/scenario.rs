//! Scenario files.
//!
//! A scenario is a TOML document. Every number may be written as an integer,
//! a float or a string holding a decimal or a fraction such as `"50/21"`.
//!
//! ```toml
//! dimension = 2
//! speed = 1.0                   # optional, default 1
//! seed = 7                      # optional, default 0
//! sensors = [[4, 0], [-3, 4], [-3, -4]]
//!
//! # at most one of the three data sources below
//! reception_table = [[4], [5], [5]]
//!
//! [[events]]
//! time = 0
//! position = [0, 0]
//!
//! [room]
//! loudspeaker = [1, 1]
//! emission_time = 0             # optional, default 0
//! include_direct = false        # optional
//! dropout = [[0, 2]]            # optional (wall, sensor) pairs
//! walls = [{ normal = [1, 0], offset = 0 }]
//!
//! [injection]
//! spurious = [[0, 1.7]]         # optional (sensor, time) pairs
//! ```
//!
//! Times are given in time units and positions in length units; the loader
//! multiplies every time by `speed` so that signals travel at unit speed.

use std::fmt;
use std::path::Path;

use serde::de::{self, Deserializer, Visitor};
use serde::Deserialize;

use crate::acoustics::{EchoOptions, Room, Wall};
use crate::lateration::{EmissionEvent, SensorArray};
use crate::matching::ReceptionTable;

/// A real number read from a scenario file.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Num(f64);

impl<'de> Deserialize<'de> for Num {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = Num;
            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a string such as \"50/21\"")
            }
            fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Num, E> {
                Ok(Num(v as f64))
            }
            fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Num, E> {
                Ok(Num(v as f64))
            }
            fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Num, E> {
                Ok(Num(v))
            }
            fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Num, E> {
                parse_number(v)
                    .map(Num)
                    .ok_or_else(|| E::custom(format!("invalid number {v:?}")))
            }
        }
        d.deserialize_any(V)
    }
}

/// Parses `"p"`, `"p/q"` with `p`, `q` decimal numbers.
pub fn parse_number(s: &str) -> Option<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((p, q)) => p.trim().parse::<f64>().ok()? / q.trim().parse::<f64>().ok()?,
        None => s.parse::<f64>().ok()?,
    };
    v.is_finite().then_some(v)
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    dimension: usize,
    speed: Option<Num>,
    seed: Option<u64>,
    sensors: Vec<Vec<Num>>,
    events: Option<Vec<RawEvent>>,
    reception_table: Option<Vec<Vec<Num>>>,
    room: Option<RawRoom>,
    injection: Option<RawInjection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEvent {
    time: Num,
    position: Vec<Num>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRoom {
    loudspeaker: Vec<Num>,
    emission_time: Option<Num>,
    include_direct: Option<bool>,
    dropout: Option<Vec<(usize, usize)>>,
    walls: Vec<RawWall>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWall {
    normal: Vec<Num>,
    offset: Num,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInjection {
    spurious: Option<Vec<(usize, Num)>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoomSpec {
    pub room: Room,
    /// Internal (distance) units.
    pub emission_time: f64,
    pub include_direct: bool,
    pub dropout: Vec<(usize, usize)>,
}

/// Which data the scenario provides.
#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    None,
    Events(Vec<EmissionEvent>),
    Table(ReceptionTable),
    Room(RoomSpec),
}

impl Source {
    pub fn name(&self) -> &'static str {
        match self {
            Source::None => "none",
            Source::Events(_) => "events",
            Source::Table(_) => "reception_table",
            Source::Room(_) => "room",
        }
    }
}

/// A validated scenario in internal units (times multiplied by `speed`).
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub dimension: usize,
    pub speed: f64,
    pub seed: u64,
    pub sensors: SensorArray,
    pub source: Source,
    /// `(sensor, time)` registrations added to simulated tables.
    pub spurious: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScenarioError {
    Io(String),
    Parse { line: Option<usize>, message: String },
    Validation(String),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::Io(m) => write!(f, "cannot read scenario: {m}"),
            ScenarioError::Parse { line: Some(l), message } => write!(f, "parse error at line {l}: {message}"),
            ScenarioError::Parse { line: None, message } => write!(f, "parse error: {message}"),
            ScenarioError::Validation(m) => write!(f, "invalid scenario: {m}"),
        }
    }
}

impl std::error::Error for ScenarioError {}

fn invalid(msg: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation(msg.into())
}

fn nums(v: &[Num]) -> Vec<f64> {
    v.iter().map(|n| n.0).collect()
}

fn point(v: &[Num], dim: usize, what: &str) -> Result<Vec<f64>, ScenarioError> {
    if v.len() != dim {
        return Err(invalid(format!(
            "{what} has {} coordinates, dimension is {dim}",
            v.len()
        )));
    }
    Ok(nums(v))
}

pub fn load_scenario(path: &Path) -> Result<Scenario, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|e| ScenarioError::Io(format!("{}: {e}", path.display())))?;
    parse_scenario(&text)
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    let raw: RawScenario = toml::from_str(text).map_err(|e| ScenarioError::Parse {
        line: e.span().map(|s| text[..s.start].matches('\n').count() + 1),
        message: e.message().to_string(),
    })?;
    validate(raw)
}

fn validate(raw: RawScenario) -> Result<Scenario, ScenarioError> {
    let n = raw.dimension;
    if n < 2 {
        return Err(invalid("dimension must be at least 2"));
    }
    let speed = raw.speed.map_or(1.0, |s| s.0);
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(invalid("speed must be positive"));
    }
    if raw.sensors.is_empty() {
        return Err(invalid("sensors list is empty"));
    }
    let positions = raw
        .sensors
        .iter()
        .enumerate()
        .map(|(i, p)| point(p, n, &format!("sensor {i}")))
        .collect::<Result<Vec<_>, _>>()?;
    let sensors = SensorArray::new(positions).map_err(|e| invalid(format!("sensors: {e}")))?;
    let m = sensors.len();

    let given = [raw.events.is_some(), raw.reception_table.is_some(), raw.room.is_some()];
    if given.iter().filter(|&&g| g).count() > 1 {
        return Err(invalid("give at most one of events, reception_table, room"));
    }

    let source = if let Some(events) = raw.events {
        let evs = events
            .iter()
            .enumerate()
            .map(|(i, e)| {
                Ok(EmissionEvent::new(
                    e.time.0 * speed,
                    point(&e.position, n, &format!("event {i}"))?,
                ))
            })
            .collect::<Result<Vec<_>, ScenarioError>>()?;
        Source::Events(evs)
    } else if let Some(lists) = raw.reception_table {
        if lists.len() != m {
            return Err(invalid(format!(
                "reception_table has {} lists for {m} sensors",
                lists.len()
            )));
        }
        let lists = lists
            .iter()
            .map(|l| nums(l).into_iter().map(|t| t * speed).collect())
            .collect();
        Source::Table(ReceptionTable::new(lists).map_err(|e| invalid(format!("reception_table: {e}")))?)
    } else if let Some(r) = raw.room {
        let loudspeaker = point(&r.loudspeaker, n, "loudspeaker")?;
        let walls = r
            .walls
            .iter()
            .enumerate()
            .map(|(i, w)| {
                let normal = point(&w.normal, n, &format!("wall {i} normal"))?;
                Wall::new(normal, w.offset.0).map_err(|e| invalid(format!("wall {i}: {e}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let nwalls = walls.len();
        let room = Room::new(walls, loudspeaker).map_err(|e| invalid(format!("room: {e}")))?;
        let dropout = r.dropout.unwrap_or_default();
        if let Some(&(w, s)) = dropout.iter().find(|&&(w, s)| w >= nwalls || s >= m) {
            return Err(invalid(format!("dropout ({w}, {s}) out of range")));
        }
        Source::Room(RoomSpec {
            room,
            emission_time: r.emission_time.map_or(0.0, |t| t.0) * speed,
            include_direct: r.include_direct.unwrap_or(false),
            dropout,
        })
    } else {
        Source::None
    };

    let spurious: Vec<(usize, f64)> = raw
        .injection
        .and_then(|i| i.spurious)
        .unwrap_or_default()
        .into_iter()
        .map(|(s, t)| (s, t.0 * speed))
        .collect();
    if let Some(&(s, _)) = spurious.iter().find(|&&(s, _)| s >= m) {
        return Err(invalid(format!("spurious registration for missing sensor {s}")));
    }

    Ok(Scenario {
        dimension: n,
        speed,
        seed: raw.seed.unwrap_or(0),
        sensors,
        source,
        spurious,
    })
}

impl Scenario {
    /// Echo simulation options for a room scenario, including injections.
    pub fn echo_options(&self) -> EchoOptions {
        match &self.source {
            Source::Room(r) => EchoOptions {
                include_direct: r.include_direct,
                dropout: r.dropout.clone(),
                spurious: self.spurious.clone(),
            },
            _ => EchoOptions {
                spurious: self.spurious.clone(),
                ..EchoOptions::default()
            },
        }
    }
}
