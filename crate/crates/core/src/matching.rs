//! Matching reception times of several emission events.
//!
//! Every choice of one reception time per sensor is a candidate tuple. A
//! tuple whose relation matrix `D` is (numerically) singular is multilaterated
//! and its causal solutions become detected events. Tuples that no common
//! event could have produced, including ones containing spurious
//! registrations, almost never satisfy the relation and are dropped.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lateration::{self, EmissionEvent, SensorArray, SolveConfig, SolvePath};
use crate::numkernel::dist;
use crate::relations::{self, build_d, relation_residual};

/// Times closer than this within one sensor's list are merged.
pub const TABLE_RESOLUTION: f64 = 1e-12;

/// Default upper bound on `|T_1| × … × |T_m|`.
pub const DEFAULT_BUDGET: u128 = 10_000_000;

/// Default of [`MatchConfig::fit_tol_rel`].
pub const DEFAULT_FIT_TOL_REL: f64 = 1e-9;

/// Per-sensor reception times, each list sorted and deduplicated.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceptionTable {
    lists: Vec<Vec<f64>>,
}

impl ReceptionTable {
    pub fn new(lists: Vec<Vec<f64>>) -> Result<Self> {
        let mut out = Vec::with_capacity(lists.len());
        for mut l in lists {
            if l.iter().any(|t| !t.is_finite()) {
                return Err(Error::NonFinite("reception table"));
            }
            l.sort_by(f64::total_cmp);
            l.dedup_by(|later, kept| *later - *kept <= TABLE_RESOLUTION);
            out.push(l);
        }
        Ok(Self { lists: out })
    }

    /// Table holding exactly the given times, one per sensor.
    pub fn single(times: &[f64]) -> Result<Self> {
        Self::new(times.iter().map(|&t| vec![t]).collect())
    }

    pub fn sensors(&self) -> usize {
        self.lists.len()
    }

    pub fn lists(&self) -> &[Vec<f64>] {
        &self.lists
    }

    pub fn list(&self, i: usize) -> &[f64] {
        &self.lists[i]
    }

    /// Adds a registration to sensor `i`.
    pub fn insert(&mut self, i: usize, time: f64) -> Result<()> {
        if !time.is_finite() {
            return Err(Error::NonFinite("reception time"));
        }
        let list = self
            .lists
            .get_mut(i)
            .ok_or_else(|| Error::Invalid(format!("no sensor {i}")))?;
        let pos = list.partition_point(|&t| t < time);
        let near = |k: usize| list.get(k).is_some_and(|&t| (t - time).abs() <= TABLE_RESOLUTION);
        if !(near(pos) || (pos > 0 && near(pos - 1))) {
            list.insert(pos, time);
        }
        Ok(())
    }

    /// Number of tuples in the full Cartesian product.
    pub fn product_size(&self) -> u128 {
        self.lists.iter().map(|l| l.len() as u128).product()
    }

    pub fn times_of(&self, indices: &[usize]) -> Vec<f64> {
        indices.iter().zip(&self.lists).map(|(&k, l)| l[k]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchConfig {
    /// Accept a tuple when its relation residual is at most this.
    pub residual_threshold: f64,
    pub solve: SolveConfig,
    /// Absolute time tolerance for merging duplicate events.
    pub dedup_time_eps: f64,
    /// Position tolerance for merging, relative to the sensor diameter.
    pub dedup_pos_rel_eps: f64,
    /// Keep both solutions when a tuple has two causal ones.
    pub keep_ambiguous: bool,
    pub budget: u128,
    /// Slack for the pruning test `|t_i − t_j| ≤ d_ij + slack`; `None` uses
    /// `1e-6 × diameter`, `Some(f64::INFINITY)` disables pruning.
    pub prune_slack: Option<f64>,
    /// Consistency check applied after solving: a causal solution is kept
    /// only if its fit residual is at most this times the sensor diameter.
    /// `None` accepts on the relation residual alone.
    pub fit_tol_rel: Option<f64>,
    pub parallel: bool,
}

impl Default for MatchConfig {
    fn default() -> Self {
        Self {
            residual_threshold: relations::DEFAULT_RESIDUAL_THRESHOLD,
            solve: SolveConfig::default(),
            dedup_time_eps: 1e-6,
            dedup_pos_rel_eps: 1e-6,
            keep_ambiguous: true,
            budget: DEFAULT_BUDGET,
            prune_slack: None,
            fit_tol_rel: Some(DEFAULT_FIT_TOL_REL),
            parallel: true,
        }
    }
}

impl MatchConfig {
    pub fn slack_for(&self, sensors: &SensorArray) -> f64 {
        self.prune_slack.unwrap_or(1e-6 * sensors.diameter())
    }

    pub fn fit_tol_for(&self, sensors: &SensorArray) -> f64 {
        self.fit_tol_rel.map_or(f64::INFINITY, |r| r * sensors.diameter())
    }

    pub fn pos_eps_for(&self, sensors: &SensorArray) -> f64 {
        self.dedup_pos_rel_eps * sensors.diameter()
    }
}

/// A detected event together with the tuple that produced it.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectedEvent {
    pub event: EmissionEvent,
    /// Index into each sensor's list.
    pub tuple: Vec<usize>,
    pub tuple_times: Vec<f64>,
    /// Relation residual of the tuple.
    pub residual: f64,
    /// `max_i |‖a_i − x‖ − (t_i − t)|` of the solution.
    pub fit_residual: f64,
    pub path: SolvePath,
    /// The tuple had two causal solutions and this is one of them.
    pub ambiguous: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedTuple {
    pub tuple: Vec<usize>,
    pub error: Error,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchReport {
    /// Deduplicated events ordered by time, then position.
    pub events: Vec<DetectedEvent>,
    /// Size of the full product `|T_1| × … × |T_m|`.
    pub candidate_tuples: u128,
    /// Tuples removed by the pairwise reception-time bound.
    pub pruned_tuples: u128,
    /// Tuples that did not pass: pruned ones, relation failures and
    /// inconsistent ones.
    pub rejected_tuples: u128,
    /// Tuples that passed the relation test but whose causal solutions all
    /// failed the fit check.
    pub inconsistent_tuples: u128,
    pub accepted_tuples: u128,
    /// Accepted tuples whose every solution was spurious.
    pub acausal_tuples: u128,
    /// Ambiguous solution pairs dropped because `keep_ambiguous` was off.
    pub dropped_ambiguous: u128,
    /// Events merged into an earlier, equivalent one.
    pub merged_duplicates: u128,
    /// Accepted tuples whose solve failed.
    pub skipped: Vec<SkippedTuple>,
}

/// Lexicographic enumeration of index tuples, skipping every tuple with a
/// sensor pair violating `|t_i − t_j| ≤ d_ij + slack`.
///
/// A common emission satisfies the bound (reverse triangle inequality), so
/// no tuple of a real event is skipped.
pub struct PrunedTuples<'a> {
    lists: &'a [Vec<f64>],
    dist: Vec<Vec<f64>>,
    slack: f64,
    idx: Vec<usize>,
    level: usize,
    first_end: usize,
    done: bool,
}

impl<'a> PrunedTuples<'a> {
    fn new(sensors: &SensorArray, table: &'a ReceptionTable, slack: f64, first: std::ops::Range<usize>) -> Self {
        let m = table.sensors();
        let dist = (0..m)
            .map(|i| (0..m).map(|j| sensors.distance(i, j)).collect())
            .collect();
        let mut idx = vec![0; m];
        if m > 0 {
            idx[0] = first.start;
        }
        Self {
            lists: table.lists(),
            dist,
            slack,
            idx,
            level: 0,
            first_end: first.end.min(table.lists().first().map_or(0, Vec::len)),
            done: m == 0,
        }
    }

    fn compatible(&self, level: usize) -> bool {
        let t = self.lists[level][self.idx[level]];
        (0..level).all(|j| {
            let tj = self.lists[j][self.idx[j]];
            (t - tj).abs() <= self.dist[level][j] + self.slack
        })
    }

    fn level_len(&self, level: usize) -> usize {
        if level == 0 {
            self.first_end
        } else {
            self.lists[level].len()
        }
    }
}

impl Iterator for PrunedTuples<'_> {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let m = self.idx.len();
        while !self.done {
            if self.level == m {
                let out = self.idx.clone();
                self.level -= 1;
                self.idx[self.level] += 1;
                return Some(out);
            }
            if self.idx[self.level] >= self.level_len(self.level) {
                if self.level == 0 {
                    self.done = true;
                    break;
                }
                self.idx[self.level] = 0;
                self.level -= 1;
                self.idx[self.level] += 1;
                continue;
            }
            if self.compatible(self.level) {
                self.level += 1;
                if self.level < m {
                    self.idx[self.level] = 0;
                }
            } else {
                self.idx[self.level] += 1;
            }
        }
        None
    }
}

/// Tuples of `table` that pass the pairwise bound, in lexicographic order.
pub fn prune_tuples<'a>(sensors: &SensorArray, table: &'a ReceptionTable, slack: f64) -> PrunedTuples<'a> {
    PrunedTuples::new(sensors, table, slack, 0..usize::MAX)
}

enum Outcome {
    Rejected,
    Inconsistent,
    Accepted {
        events: Vec<DetectedEvent>,
        acausal: bool,
        dropped_ambiguous: bool,
    },
    Skipped(SkippedTuple),
}

fn evaluate(sensors: &SensorArray, table: &ReceptionTable, tuple: Vec<usize>, config: &MatchConfig) -> Outcome {
    let times = table.times_of(&tuple);
    let residual = match build_d(sensors, &times) {
        Ok(d) => relation_residual(&d),
        Err(error) => return Outcome::Skipped(SkippedTuple { tuple, error }),
    };
    if residual > config.residual_threshold {
        return Outcome::Rejected;
    }
    let result = match lateration::solve(sensors, &times, &config.solve) {
        Ok(r) => r,
        Err(error) => return Outcome::Skipped(SkippedTuple { tuple, error }),
    };
    let fit_tol = config.fit_tol_for(sensors);
    let fitted: Vec<_> = result
        .non_spurious()
        .map(|c| (c, lateration::causal_residual(sensors, &times, &c.event)))
        .collect();
    if !fitted.is_empty() && fitted.iter().all(|(_, f)| *f > fit_tol) {
        return Outcome::Inconsistent;
    }
    let causal: Vec<_> = fitted.into_iter().filter(|(_, f)| *f <= fit_tol).collect();
    let ambiguous = causal.len() > 1;
    let dropped_ambiguous = ambiguous && !config.keep_ambiguous;
    let events = if dropped_ambiguous {
        Vec::new()
    } else {
        causal
            .iter()
            .map(|(c, fit)| DetectedEvent {
                fit_residual: *fit,
                event: c.event.clone(),
                tuple: tuple.clone(),
                tuple_times: times.clone(),
                residual,
                path: result.path,
                ambiguous,
            })
            .collect()
    };
    Outcome::Accepted {
        events,
        acausal: causal.is_empty(),
        dropped_ambiguous,
    }
}

/// Detects emission events from per-sensor reception times.
///
/// A tuple is accepted when its relation residual is at most
/// `residual_threshold` and one of its causal solutions reproduces the
/// tuple within the fit tolerance.
///
/// Requires `m = n + 2` sensors. Solver failures on individual tuples are
/// recorded in [`MatchReport::skipped`] and do not abort the sweep. The
/// result does not depend on `config.parallel`.
pub fn match_events(sensors: &SensorArray, table: &ReceptionTable, config: &MatchConfig) -> Result<MatchReport> {
    let n = sensors.dim();
    if sensors.len() != n + 2 {
        return Err(Error::Invalid(format!(
            "matching needs exactly {} sensors in dimension {n}, got {}",
            n + 2,
            sensors.len()
        )));
    }
    if table.sensors() != sensors.len() {
        return Err(Error::LengthMismatch {
            expected: sensors.len(),
            actual: table.sensors(),
        });
    }
    let product = table.product_size();
    if product > config.budget {
        return Err(Error::BudgetExceeded {
            product,
            budget: config.budget,
        });
    }

    let slack = config.slack_for(sensors);
    let run = |first: usize| -> Vec<Outcome> {
        PrunedTuples::new(sensors, table, slack, first..first + 1)
            .map(|t| evaluate(sensors, table, t, config))
            .collect()
    };
    let first_len = table.list(0).len();
    let chunks: Vec<Vec<Outcome>> = if config.parallel {
        (0..first_len).into_par_iter().map(run).collect()
    } else {
        (0..first_len).map(run).collect()
    };

    let mut report = MatchReport {
        candidate_tuples: product,
        ..MatchReport::default()
    };
    let mut raw = Vec::new();
    let mut evaluated: u128 = 0;
    for outcome in chunks.into_iter().flatten() {
        evaluated += 1;
        match outcome {
            Outcome::Rejected => report.rejected_tuples += 1,
            Outcome::Inconsistent => {
                report.rejected_tuples += 1;
                report.inconsistent_tuples += 1;
            }
            Outcome::Skipped(s) => {
                report.accepted_tuples += 1;
                report.skipped.push(s);
            }
            Outcome::Accepted {
                events,
                acausal,
                dropped_ambiguous,
            } => {
                report.accepted_tuples += 1;
                report.acausal_tuples += u128::from(acausal);
                report.dropped_ambiguous += u128::from(dropped_ambiguous);
                raw.extend(events);
            }
        }
    }
    report.pruned_tuples = product - evaluated;
    report.rejected_tuples += report.pruned_tuples;

    let pos_eps = config.pos_eps_for(sensors);
    let mut kept: Vec<DetectedEvent> = Vec::new();
    for e in raw {
        let duplicate = kept.iter().any(|k| {
            (k.event.time - e.event.time).abs() <= config.dedup_time_eps
                && dist(&k.event.position, &e.event.position) <= pos_eps
        });
        if duplicate {
            report.merged_duplicates += 1;
        } else {
            kept.push(e);
        }
    }
    kept.sort_by(|a, b| {
        a.event.time.total_cmp(&b.event.time).then_with(|| {
            a.event
                .position
                .iter()
                .zip(&b.event.position)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    report.events = kept;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sensors() -> SensorArray {
        SensorArray::new(vec![
            vec![0.0, 0.0, 0.0],
            vec![1.0, 0.1, 0.0],
            vec![0.2, 1.0, 0.0],
            vec![0.1, 0.3, 1.0],
            vec![0.9, 0.8, 0.7],
        ])
        .unwrap()
    }

    fn table_for(s: &SensorArray, events: &[EmissionEvent]) -> ReceptionTable {
        let mut lists = vec![Vec::new(); s.len()];
        for e in events {
            for (l, t) in lists.iter_mut().zip(s.reception_times(e)) {
                l.push(t);
            }
        }
        ReceptionTable::new(lists).unwrap()
    }

    #[test]
    fn table_sorts_and_dedups() {
        let t = ReceptionTable::new(vec![vec![3.0, 1.0, 1.0 + 1e-13, 2.0]]).unwrap();
        assert_eq!(t.list(0), &[1.0, 2.0, 3.0]);
        let mut t = t;
        t.insert(0, 2.5).unwrap();
        t.insert(0, 2.0 + 1e-14).unwrap();
        assert_eq!(t.list(0), &[1.0, 2.0, 2.5, 3.0]);
        assert!(ReceptionTable::new(vec![vec![f64::NAN]]).is_err());
    }

    #[test]
    fn single_event() {
        let s = sensors();
        let ev = EmissionEvent::new(0.25, vec![1.5, -0.5, 2.0]);
        let r = match_events(&s, &table_for(&s, std::slice::from_ref(&ev)), &MatchConfig::default()).unwrap();
        assert_eq!(r.events.len(), 1);
        assert!(r.events[0].residual <= 1e-8);
        assert!((r.events[0].event.time - ev.time).abs() < 1e-8);
        assert!(dist(&r.events[0].event.position, &ev.position) < 1e-8);
        assert_eq!(r.candidate_tuples, 1);
        assert_eq!(r.accepted_tuples, 1);
    }

    #[test]
    fn three_events() {
        let s = sensors();
        let evs = [
            EmissionEvent::new(0.0, vec![1.5, -0.5, 2.0]),
            EmissionEvent::new(0.4, vec![-2.0, 1.0, 0.3]),
            EmissionEvent::new(1.1, vec![0.5, 3.0, -1.0]),
        ];
        let r = match_events(&s, &table_for(&s, &evs), &MatchConfig::default()).unwrap();
        assert_eq!(r.events.len(), 3);
        for (d, e) in r.events.iter().zip(&evs) {
            assert!((d.event.time - e.time).abs() < 1e-8);
            assert!(dist(&d.event.position, &e.position) < 1e-8);
        }
        assert_eq!(r.candidate_tuples, 243);
        assert_eq!(r.rejected_tuples + r.accepted_tuples, 243);
    }

    #[test]
    fn spurious_timestamp_is_ignored() {
        let s = sensors();
        let evs = [
            EmissionEvent::new(0.0, vec![1.5, -0.5, 2.0]),
            EmissionEvent::new(0.4, vec![-2.0, 1.0, 0.3]),
        ];
        let mut table = table_for(&s, &evs);
        let base = match_events(&s, &table, &MatchConfig::default()).unwrap();
        table.insert(0, 1.7318).unwrap();
        let noisy = match_events(&s, &table, &MatchConfig::default()).unwrap();
        let key = |r: &MatchReport| {
            r.events
                .iter()
                .map(|e| (e.event.clone(), e.tuple_times.clone()))
                .collect::<Vec<_>>()
        };
        assert_eq!(key(&base), key(&noisy));
        assert!(noisy.rejected_tuples > base.rejected_tuples);
    }

    #[test]
    fn fit_check_rejects_near_consistent_tuple() {
        let s = sensors();
        let mut t = s.reception_times(&EmissionEvent::new(0.0, vec![1.5, -0.5, 2.0]));
        t[2] += 1e-5;
        let table = ReceptionTable::single(&t).unwrap();
        let loose = MatchConfig {
            residual_threshold: 1.0,
            ..MatchConfig::default()
        };
        let r = match_events(&s, &table, &loose).unwrap();
        assert!(r.events.is_empty());
        assert_eq!(r.inconsistent_tuples, 1);
        assert_eq!(r.rejected_tuples, 1);
        let plain = MatchConfig {
            fit_tol_rel: None,
            ..loose
        };
        let r = match_events(&s, &table, &plain).unwrap();
        assert_eq!(r.events.len(), 1);
        assert!(r.events[0].fit_residual > 1e-7);
    }

    #[test]
    fn parallel_equals_sequential() {
        let s = sensors();
        let evs = [
            EmissionEvent::new(0.0, vec![1.5, -0.5, 2.0]),
            EmissionEvent::new(0.1, vec![-2.0, 1.0, 0.3]),
            EmissionEvent::new(0.2, vec![0.5, 3.0, -1.0]),
        ];
        let table = table_for(&s, &evs);
        let par = match_events(&s, &table, &MatchConfig::default()).unwrap();
        let seq = match_events(
            &s,
            &table,
            &MatchConfig {
                parallel: false,
                ..MatchConfig::default()
            },
        )
        .unwrap();
        assert_eq!(par, seq);
    }

    #[test]
    fn budget_and_shape_errors() {
        let s = sensors();
        let table = ReceptionTable::new(vec![vec![0.0, 1.0, 2.0]; 5]).unwrap();
        let cfg = MatchConfig {
            budget: 100,
            ..MatchConfig::default()
        };
        assert!(matches!(
            match_events(&s, &table, &cfg),
            Err(Error::BudgetExceeded {
                product: 243,
                budget: 100
            })
        ));
        let short = ReceptionTable::new(vec![vec![0.0]; 4]).unwrap();
        assert!(matches!(
            match_events(&s, &short, &MatchConfig::default()),
            Err(Error::LengthMismatch { .. })
        ));
        let six = SensorArray::new([s.positions(), &[vec![5.0, 5.0, 5.0]]].concat()).unwrap();
        assert!(matches!(
            match_events(
                &six,
                &ReceptionTable::new(vec![vec![0.0]; 6]).unwrap(),
                &MatchConfig::default()
            ),
            Err(Error::Invalid(_))
        ));
    }

    #[test]
    fn pruning_enumeration() {
        let s = sensors();
        let table =
            ReceptionTable::new(vec![vec![0.0, 10.0], vec![0.1, 10.1], vec![0.0], vec![0.2], vec![0.3]]).unwrap();
        let all: Vec<_> = prune_tuples(&s, &table, f64::INFINITY).collect();
        assert_eq!(all.len(), 4);
        assert_eq!(all[0], vec![0, 0, 0, 0, 0]);
        assert_eq!(all[3], vec![1, 1, 0, 0, 0]);
        let kept: Vec<_> = prune_tuples(&s, &table, 0.0).collect();
        assert_eq!(kept, vec![vec![0, 0, 0, 0, 0]]);
        let empty = ReceptionTable::new(vec![vec![], vec![0.0], vec![0.0], vec![0.0], vec![0.0]]).unwrap();
        assert_eq!(prune_tuples(&s, &empty, f64::INFINITY).count(), 0);
    }

    #[test]
    fn ambiguous_pair_is_flagged_or_dropped() {
        // 2D example with two causal solutions; four sensors = n + 2
        let s = SensorArray::new(vec![
            vec![9.0, 12.0],
            vec![9.0, -12.0],
            vec![10.0, -24.0],
            vec![10.0, 24.0],
        ])
        .unwrap();
        let table = ReceptionTable::single(&[15.0, 15.0, 26.0, 26.0]).unwrap();
        let r = match_events(&s, &table, &MatchConfig::default()).unwrap();
        assert_eq!(r.events.len(), 2);
        assert!(r.events.iter().all(|e| e.ambiguous));
        let cfg = MatchConfig {
            keep_ambiguous: false,
            ..MatchConfig::default()
        };
        let r = match_events(&s, &table, &cfg).unwrap();
        assert!(r.events.is_empty());
        assert_eq!(r.dropped_ambiguous, 1);
    }
}
