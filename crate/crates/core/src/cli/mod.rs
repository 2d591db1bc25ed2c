//! Command-line front end used by the `tdoa` binary.

pub mod scenario;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Parser, ValueEnum};

use crate::acoustics::{detect_walls, goodness_check, simulate_echoes, GoodnessConfig};
use crate::error::Error;
use crate::lateration::{absolute_residual, check_geometry, solve, SolveConfig, SolveResult};
use crate::matching::{match_events, MatchConfig, MatchReport, ReceptionTable};
use crate::numkernel::DEFAULT_RANK_TOL;
use crate::relations::DEFAULT_RESIDUAL_THRESHOLD;
use scenario::{load_scenario, Scenario, ScenarioError, Source};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Command {
    /// Locate the emission event of each reception tuple.
    Solve,
    /// Match unlabelled reception lists into events.
    Match,
    /// Write the reception table of the scenario's events or room.
    Simulate,
    /// Reconstruct walls from the room's echoes.
    DetectWalls,
    /// Affine span and sign-pattern determinant checks of the sensors.
    CheckGeometry,
    /// Monte-Carlo ghost-wall check of the sensor placement.
    Goodness,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Match => "match",
            Command::Simulate => "simulate",
            Command::DetectWalls => "detect-walls",
            Command::CheckGeometry => "check-geometry",
            Command::Goodness => "goodness",
        }
    }
}

#[derive(Debug, Clone, PartialEq, clap::Args)]
pub struct Flags {
    /// Relation residual threshold for accepting a tuple.
    #[arg(long, default_value_t = DEFAULT_RESIDUAL_THRESHOLD)]
    pub tolerance: f64,
    /// Relative singular value threshold for rank decisions.
    #[arg(long, default_value_t = DEFAULT_RANK_TOL)]
    pub rank_tol: f64,
    /// Overrides the scenario seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Maximum number of tuples matching may enumerate.
    #[arg(long, default_value_t = crate::matching::DEFAULT_BUDGET)]
    pub budget: u128,
    /// Directory for report.txt and CSV tables.
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// Keep both solutions of tuples with two causal solutions.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub keep_ambiguous: bool,
    /// Fit tolerance relative to the sensor diameter for accepted tuples.
    #[arg(long, default_value_t = crate::matching::DEFAULT_FIT_TOL_REL)]
    pub fit_tol: f64,
    /// Accept tuples on the relation residual alone.
    #[arg(long)]
    pub no_fit_check: bool,
    /// Number of trials for `goodness`.
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
}

impl Default for Flags {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_RESIDUAL_THRESHOLD,
            rank_tol: DEFAULT_RANK_TOL,
            seed: None,
            budget: crate::matching::DEFAULT_BUDGET,
            output: None,
            keep_ambiguous: true,
            fit_tol: crate::matching::DEFAULT_FIT_TOL_REL,
            no_fit_check: false,
            trials: 100,
        }
    }
}

impl Flags {
    fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            rank_tol: self.rank_tol,
            ..SolveConfig::default()
        }
    }

    fn match_config(&self) -> MatchConfig {
        MatchConfig {
            residual_threshold: self.tolerance,
            solve: self.solve_config(),
            keep_ambiguous: self.keep_ambiguous,
            budget: self.budget,
            fit_tol_rel: (!self.no_fit_check).then_some(self.fit_tol),
            ..MatchConfig::default()
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "tdoa",
    version,
    about = "Pseudo-range multilateration, event matching and wall detection"
)]
pub struct Cli {
    #[arg(value_enum)]
    pub command: Command,
    /// Scenario file (TOML).
    pub scenario: PathBuf,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    Scenario(ScenarioError),
    Usage(String),
    Numeric(Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(e) if e.is_numeric() => 3,
            _ => 2,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Scenario(e) => e.fmt(f),
            CliError::Usage(m) => f.write_str(m),
            CliError::Numeric(e) => write!(f, "{e}"),
        }
    }
}

impl From<ScenarioError> for CliError {
    fn from(e: ScenarioError) -> Self {
        CliError::Scenario(e)
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Numeric(e)
    }
}

/// Report text plus named CSV tables.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Output {
    pub report: String,
    pub tables: Vec<(String, String)>,
}

/// Shortest decimal that parses back to the same value.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    let plain = x.to_string();
    let exp = format!("{x:e}");
    if exp.len() < plain.len() {
        exp
    } else {
        plain
    }
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|&x| fmt_num(x)).collect();
    format!("({})", parts.join(", "))
}

fn events_header(n: usize) -> String {
    let mut h = String::from("time");
    for i in 1..=n {
        let _ = write!(h, ",x{i}");
    }
    h.push_str(",spurious,residual\n");
    h
}

fn event_row(csv: &mut String, time: f64, x: &[f64], spurious: bool, residual: f64) {
    let _ = write!(csv, "{}", fmt_num(time));
    for &c in x {
        let _ = write!(csv, ",{}", fmt_num(c));
    }
    let _ = writeln!(csv, ",{spurious},{}", fmt_num(residual));
}

fn header(cmd: Command, sc: &Scenario, flags: &Flags) -> String {
    let mut r = String::new();
    let _ = writeln!(r, "tdoa {VERSION}");
    let _ = writeln!(r, "command: {}", cmd.name());
    let _ = writeln!(r, "config:");
    let _ = writeln!(r, "  tolerance = {}", fmt_num(flags.tolerance));
    let _ = writeln!(r, "  rank_tol = {}", fmt_num(flags.rank_tol));
    let _ = writeln!(
        r,
        "  degenerate_tol = {}",
        fmt_num(SolveConfig::default().degenerate_tol)
    );
    let _ = writeln!(r, "  time_tol = 1e-9 * (time span + sensor diameter)");
    let fit = if flags.no_fit_check {
        "off".to_string()
    } else {
        format!("{} x diameter", fmt_num(flags.fit_tol))
    };
    let _ = writeln!(r, "  fit_tol = {fit}");
    let _ = writeln!(r, "  budget = {}", flags.budget);
    let _ = writeln!(r, "  keep_ambiguous = {}", flags.keep_ambiguous);
    let _ = writeln!(r, "  seed = {}", flags.seed.unwrap_or(sc.seed));
    let _ = writeln!(r, "  trials = {}", flags.trials);
    let _ = writeln!(r, "scenario:");
    let _ = writeln!(r, "  dimension = {}", sc.dimension);
    let _ = writeln!(r, "  speed = {}", fmt_num(sc.speed));
    let _ = writeln!(r, "  sensors = {}", sc.sensors.len());
    let _ = writeln!(r, "  source = {}", sc.source.name());
    let _ = writeln!(r, "  spurious injections = {}", sc.spurious.len());
    let _ = writeln!(
        r,
        "internal units: times are multiplied by speed; tables report original units"
    );
    r
}

/// Reception tuples for `solve`: one per event or the single-entry table.
fn solve_tuples(sc: &Scenario) -> Result<Vec<Vec<f64>>, CliError> {
    match &sc.source {
        Source::Events(evs) => Ok(evs.iter().map(|e| sc.sensors.reception_times(e)).collect()),
        Source::Table(t) if t.lists().iter().all(|l| l.len() == 1) => {
            Ok(vec![t.lists().iter().map(|l| l[0]).collect()])
        }
        Source::Table(_) => Err(CliError::Usage(
            "solve needs exactly one reception time per sensor; use match for longer lists".into(),
        )),
        _ => Err(CliError::Usage("solve needs events or a reception_table".into())),
    }
}

/// Reception table for `match` and `simulate`.
fn table_for(sc: &Scenario) -> Result<ReceptionTable, CliError> {
    let mut table = match &sc.source {
        Source::Table(t) => t.clone(),
        Source::Events(evs) => {
            let mut lists = vec![Vec::new(); sc.sensors.len()];
            for e in evs {
                for (l, t) in lists.iter_mut().zip(sc.sensors.reception_times(e)) {
                    l.push(t);
                }
            }
            ReceptionTable::new(lists)?
        }
        Source::Room(r) => {
            return Ok(simulate_echoes(
                &r.room,
                &sc.sensors,
                r.emission_time,
                &sc.echo_options(),
            )?)
        }
        Source::None => {
            return Err(CliError::Usage(
                "scenario has no events, reception_table or room".into(),
            ))
        }
    };
    for &(s, t) in &sc.spurious {
        table.insert(s, t)?;
    }
    Ok(table)
}

fn write_solve(r: &mut String, csv: &mut String, sc: &Scenario, times: &[f64], res: &SolveResult) {
    let _ = writeln!(
        r,
        "  times = {}",
        fmt_vec(&times.iter().map(|t| t / sc.speed).collect::<Vec<_>>())
    );
    let _ = writeln!(r, "  path = {}", res.path.as_str());
    let _ = writeln!(r, "  rank_of_a = {}", res.rank_of_a);
    if let Some(q) = &res.quadratic {
        let _ = writeln!(r, "  u = {}", fmt_vec(&q.u));
        let _ = writeln!(r, "  v = {}", fmt_vec(&q.v));
        let _ = writeln!(r, "  alpha = {}", fmt_num(q.alpha));
        let _ = writeln!(r, "  beta = {}", fmt_num(q.beta));
        let _ = writeln!(r, "  quadratic = {}", fmt_vec(&q.coeffs));
        let _ = writeln!(r, "  roots = {}", q.roots.kind_name());
    }
    for c in &res.candidates {
        let resid = absolute_residual(&sc.sensors, times, &c.event);
        let t = c.event.time / sc.speed;
        let _ = writeln!(
            r,
            "  candidate t = {} x = {} {} (residual {})",
            fmt_num(t),
            fmt_vec(&c.event.position),
            if c.spurious { "spurious" } else { "ok" },
            fmt_num(resid)
        );
        event_row(csv, t, &c.event.position, c.spurious, resid);
    }
}

fn write_match(r: &mut String, csv: &mut String, sc: &Scenario, rep: &MatchReport) {
    let _ = writeln!(r, "  candidate_tuples = {}", rep.candidate_tuples);
    let _ = writeln!(r, "  pruned_tuples = {}", rep.pruned_tuples);
    let _ = writeln!(r, "  rejected_tuples = {}", rep.rejected_tuples);
    let _ = writeln!(r, "  inconsistent_tuples = {}", rep.inconsistent_tuples);
    let _ = writeln!(r, "  accepted_tuples = {}", rep.accepted_tuples);
    let _ = writeln!(r, "  acausal_tuples = {}", rep.acausal_tuples);
    let _ = writeln!(r, "  dropped_ambiguous = {}", rep.dropped_ambiguous);
    let _ = writeln!(r, "  merged_duplicates = {}", rep.merged_duplicates);
    let _ = writeln!(r, "  skipped_tuples = {}", rep.skipped.len());
    for s in &rep.skipped {
        let _ = writeln!(r, "    tuple {:?}: {}", s.tuple, s.error);
    }
    let _ = writeln!(r, "  events = {}", rep.events.len());
    for e in &rep.events {
        let t = e.event.time / sc.speed;
        let _ = writeln!(
            r,
            "    t = {} x = {} tuple = {:?} residual = {} fit = {} path = {}{}",
            fmt_num(t),
            fmt_vec(&e.event.position),
            e.tuple,
            fmt_num(e.residual),
            fmt_num(e.fit_residual),
            e.path.as_str(),
            if e.ambiguous { " ambiguous" } else { "" }
        );
        event_row(csv, t, &e.event.position, false, e.residual);
    }
}

/// Runs `cmd` on a loaded scenario.
pub fn run(cmd: Command, sc: &Scenario, flags: &Flags) -> Result<Output, CliError> {
    let mut r = header(cmd, sc, flags);
    let mut out = Output::default();
    let n = sc.dimension;
    match cmd {
        Command::Solve => {
            let mut csv = events_header(n);
            let cfg = flags.solve_config();
            for (k, times) in solve_tuples(sc)?.iter().enumerate() {
                let res = solve(&sc.sensors, times, &cfg)?;
                let _ = writeln!(r, "tuple {k}:");
                write_solve(&mut r, &mut csv, sc, times, &res);
            }
            out.tables.push(("events.csv".into(), csv));
        }
        Command::Match => {
            let table = table_for(sc)?;
            let rep = match_events(&sc.sensors, &table, &flags.match_config())?;
            let mut csv = events_header(n);
            let _ = writeln!(r, "matching:");
            write_match(&mut r, &mut csv, sc, &rep);
            out.tables.push(("events.csv".into(), csv));
        }
        Command::Simulate => {
            if matches!(sc.source, Source::Table(_)) {
                return Err(CliError::Usage("simulate needs events or a room".into()));
            }
            let table = table_for(sc)?;
            let mut csv = String::from("sensor,time\n");
            let _ = writeln!(r, "reception table:");
            for (i, l) in table.lists().iter().enumerate() {
                let times: Vec<f64> = l.iter().map(|t| t / sc.speed).collect();
                let _ = writeln!(r, "  sensor {i}: {}", fmt_vec(&times));
                for t in times {
                    let _ = writeln!(csv, "{i},{}", fmt_num(t));
                }
            }
            out.tables.push(("reception_table.csv".into(), csv));
        }
        Command::DetectWalls => {
            let Source::Room(room) = &sc.source else {
                return Err(CliError::Usage("detect-walls needs a room".into()));
            };
            let table = table_for(sc)?;
            let det = detect_walls(&sc.sensors, &table, room.room.loudspeaker(), &flags.match_config())?;
            let mut events = events_header(n);
            let _ = writeln!(r, "matching:");
            write_match(&mut r, &mut events, sc, &det.report);
            let mut walls = String::new();
            for i in 1..=n {
                let _ = write!(walls, "n{i},");
            }
            walls.push_str("offset\n");
            match &det.direct {
                Some(d) => {
                    let _ = writeln!(r, "direct sound at t = {}", fmt_num(d.event.time / sc.speed));
                }
                None => {
                    let _ = writeln!(r, "direct sound not detected");
                }
            }
            let _ = writeln!(r, "walls = {}", det.walls.len());
            for w in &det.walls {
                let _ = writeln!(
                    r,
                    "  normal = {} offset = {} mirror = {}",
                    fmt_vec(w.wall.normal()),
                    fmt_num(w.wall.offset()),
                    fmt_vec(&w.source.event.position)
                );
                for &c in w.wall.normal() {
                    let _ = write!(walls, "{},", fmt_num(c));
                }
                let _ = writeln!(walls, "{}", fmt_num(w.wall.offset()));
            }
            out.tables.push(("events.csv".into(), events));
            out.tables.push(("walls.csv".into(), walls));
        }
        Command::CheckGeometry => {
            let g = check_geometry(&sc.sensors, flags.rank_tol);
            let _ = writeln!(r, "geometry:");
            let _ = writeln!(r, "  noncoplanar = {}", g.noncoplanar);
            let cond = g
                .condition_ok
                .map_or("not applicable (needs n + 2 sensors)".to_string(), |c| c.to_string());
            let _ = writeln!(r, "  condition_ok = {cond}");
            if let Some(d) = g.min_normalized_det {
                let _ = writeln!(r, "  min_normalized_det = {}", fmt_num(d));
            }
            for p in &g.failing_sign_patterns {
                let signs: String = p.iter().map(|&s| if s > 0 { '+' } else { '-' }).collect();
                let _ = writeln!(r, "  failing pattern {signs}");
            }
            for s in &g.degenerate_subsets {
                let _ = writeln!(r, "  degenerate subset {s:?}");
            }
        }
        Command::Goodness => {
            let Source::Room(room) = &sc.source else {
                return Err(CliError::Usage("goodness needs a room".into()));
            };
            let cfg = GoodnessConfig {
                matching: flags.match_config(),
                include_direct: room.include_direct,
                ..GoodnessConfig::default()
            };
            let seed = flags.seed.unwrap_or(sc.seed);
            let g = goodness_check(&room.room, &sc.sensors, flags.trials, seed, &cfg)?;
            let _ = writeln!(r, "goodness:");
            let _ = writeln!(r, "  trials = {}", g.trials);
            let _ = writeln!(r, "  perturbation = {} x diameter", fmt_num(cfg.perturbation));
            let _ = writeln!(r, "  ghost_walls_found = {}", g.ghost_walls_found);
            let _ = writeln!(r, "  trials_with_ghosts = {}", g.trials_with_ghosts);
            let _ = writeln!(r, "  missed_walls = {}", g.missed_walls);
            let _ = writeln!(r, "  failed_trials = {}", g.failed_trials);
            let margin = g.min_mixed_residual.map_or("not applicable".to_string(), fmt_num);
            let _ = writeln!(r, "  min_mixed_residual = {margin}");
            let _ = writeln!(r, "  margin_flagged = {}", g.margin_flagged);
        }
    }
    out.report = r;
    Ok(out)
}

fn write_output(dir: &Path, out: &Output) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("report.txt"), &out.report)?;
    for (name, body) in &out.tables {
        std::fs::write(dir.join(name), body)?;
    }
    Ok(())
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with(cli: Cli) -> i32 {
    let result = load_scenario(&cli.scenario)
        .map_err(CliError::from)
        .and_then(|sc| run(cli.command, &sc, &cli.flags));
    match result {
        Ok(out) => {
            print!("{}", out.report);
            if let Some(dir) = &cli.flags.output {
                if let Err(e) = write_output(dir, &out) {
                    eprintln!("error: cannot write {}: {e}", dir.display());
                    return 2;
                }
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::scenario::parse_scenario;
    use super::*;

    fn run_text(cmd: Command, text: &str) -> Result<Output, CliError> {
        run(cmd, &parse_scenario(text).unwrap(), &Flags::default())
    }

    #[test]
    fn solve_marks_spurious() {
        let out = run_text(
            Command::Solve,
            "dimension = 2\nsensors = [[4, 0], [-3, 4], [-3, -4]]\nreception_table = [[4], [5], [5]]\n",
        )
        .unwrap();
        let csv = &out.tables[0].1;
        let rows: Vec<&str> = csv.lines().collect();
        assert_eq!(rows[0], "time,x1,x2,spurious,residual");
        assert_eq!(rows.len(), 3);
        let parse = |row: &str| -> (Vec<f64>, bool) {
            let f: Vec<&str> = row.split(',').collect();
            (f[..3].iter().map(|v| v.parse().unwrap()).collect(), f[3] == "true")
        };
        let (a, sa) = parse(rows[1]);
        let (b, sb) = parse(rows[2]);
        assert!(a.iter().all(|v| v.abs() < 1e-12) && !sa, "{csv}");
        assert!(
            (b[0] - 28.0 / 3.0).abs() < 1e-12 && (b[1] + 4.0 / 3.0).abs() < 1e-12 && sb,
            "{csv}"
        );
    }

    #[test]
    fn fmt_is_round_trip() {
        for x in [0.1, 1.0 / 3.0, -8360.0 / 38173.0, 1e-30, 12345.678] {
            assert_eq!(fmt_num(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(2.0), "2");
        assert_eq!(fmt_num(1e-30), "1e-30");
        assert_eq!(fmt_num(1e21), "1e21");
    }

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Numeric(Error::TheoremViolation).exit_code(), 3);
        assert_eq!(
            CliError::Numeric(Error::BudgetExceeded { product: 2, budget: 1 }).exit_code(),
            2
        );
        assert_eq!(CliError::Usage(String::new()).exit_code(), 2);
    }

    #[test]
    fn wrong_source_is_usage_error() {
        let e = run_text(
            Command::DetectWalls,
            "dimension = 2\nsensors = [[1, 0], [0, 1], [1, 1]]\n",
        )
        .unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }
}
