use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tdoa_core::cli::scenario::{load_scenario, ScenarioError};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(name)
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)).unwrap()
}

fn tdoa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdoa")).args(args).output().unwrap()
}

/// Runs a command with `--output` into a fresh directory.
fn run_to_dir(cmd: &str, file: &Path, extra: &[&str]) -> (Output, tempfile::TempDir) {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec![cmd, file.to_str().unwrap(), "--output", dir.path().to_str().unwrap()];
    args.extend_from_slice(extra);
    (tdoa(&args), dir)
}

fn read(dir: &tempfile::TempDir, name: &str) -> String {
    std::fs::read_to_string(dir.path().join(name)).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

/// Same header, same flags, numbers equal within `tol`.
fn assert_csv_close(actual: &str, expected: &str, tol: f64) {
    assert_eq!(actual.lines().next(), expected.lines().next());
    let (a, e) = (rows(actual), rows(expected));
    assert_eq!(a.len(), e.len(), "{actual}");
    for (ra, re) in a.iter().zip(&e) {
        assert_eq!(ra.len(), re.len());
        for (x, y) in ra.iter().zip(re) {
            match (x.parse::<f64>(), y.parse::<f64>()) {
                (Ok(x), Ok(y)) => assert!((x - y).abs() <= tol * y.abs().max(1.0), "{x} vs {y}\n{actual}"),
                _ => assert_eq!(x, y),
            }
        }
    }
}

#[test]
fn every_small_scenario_solves() {
    for name in [
        "two_solutions_3d",
        "two_solutions_planar",
        "spurious_root",
        "circumcenter",
        "double_root",
        "linear_degenerate",
    ] {
        let out = tdoa(&["solve", scenario(&format!("{name}.toml")).to_str().unwrap()]);
        assert_eq!(
            out.status.code(),
            Some(0),
            "{name}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn golden_solve_tables() {
    for (file, gold) in [
        ("two_solutions_3d.toml", "two_solutions_3d_events.csv"),
        ("spurious_root.toml", "spurious_root_events.csv"),
    ] {
        let (out, dir) = run_to_dir("solve", &scenario(file), &[]);
        assert_eq!(out.status.code(), Some(0));
        assert_csv_close(&read(&dir, "events.csv"), &golden(gold), 1e-12);
    }
}

#[test]
fn solve_report_lists_diagnostics() {
    let out = tdoa(&["solve", scenario("two_solutions_3d.toml").to_str().unwrap()]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("path = quadratic"));
    assert!(text.contains("rank_of_a = 4"));
    assert!(text.contains("roots = two-real"));
    for key in [
        "tolerance = 1e-6",
        "rank_tol = 1e-8",
        "budget = 10000000",
        "keep_ambiguous = true",
        "seed = 0",
    ] {
        assert!(text.contains(key), "missing {key}:\n{text}");
    }
    assert!(text.starts_with(&format!("tdoa {}", env!("CARGO_PKG_VERSION"))));
}

#[test]
fn shoebox_walls() {
    let (out, dir) = run_to_dir("detect-walls", &scenario("shoebox.toml"), &[]);
    assert_eq!(out.status.code(), Some(0));
    let walls = read(&dir, "walls.csv");
    assert!(walls.starts_with("n1,n2,n3,offset\n"));
    let mut found: Vec<(Vec<f64>, f64)> = rows(&walls)
        .iter()
        .map(|r| {
            let v: Vec<f64> = r.iter().map(|x| x.parse().unwrap()).collect();
            (v[..3].to_vec(), v[3])
        })
        .collect();
    assert_eq!(found.len(), 6);
    let truth = [
        ([1.0, 0.0, 0.0], 0.0),
        ([1.0, 0.0, 0.0], 5.0),
        ([0.0, 1.0, 0.0], 0.0),
        ([0.0, 1.0, 0.0], 4.0),
        ([0.0, 0.0, 1.0], 0.0),
        ([0.0, 0.0, 1.0], 3.0),
    ];
    for (n, o) in truth {
        let pos = found
            .iter()
            .position(|(fn_, fo)| fn_.iter().zip(n).all(|(a, b)| (a - b).abs() < 1e-7) && (fo - o).abs() < 1e-7)
            .unwrap_or_else(|| panic!("wall {n:?} {o} missing:\n{walls}"));
        found.remove(pos);
    }
    let report = String::from_utf8(out.stdout).unwrap();
    assert!(report.contains("direct sound at t = 0.25"), "{report}");
}

#[test]
fn geometry_check_flags_known_array() {
    let out = tdoa(&["check-geometry", scenario("two_solutions_3d.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("condition_ok = false"));
    assert!(text.contains("failing pattern +++++"));
}

#[test]
fn match_and_simulate_three_events() {
    let (out, dir) = run_to_dir("match", &scenario("three_events.toml"), &[]);
    assert_eq!(out.status.code(), Some(0));
    let events = rows(&read(&dir, "events.csv"));
    assert_eq!(events.len(), 3);
    let times: Vec<f64> = events.iter().map(|r| r[0].parse().unwrap()).collect();
    for (t, e) in times.iter().zip([0.0, 0.4, 1.1]) {
        assert!((t - e).abs() < 1e-9);
    }
    let (out, dir) = run_to_dir("simulate", &scenario("three_events.toml"), &[]);
    assert_eq!(out.status.code(), Some(0));
    let table = read(&dir, "reception_table.csv");
    assert!(table.starts_with("sensor,time\n"));
    assert_eq!(table.lines().count(), 1 + 3 * 5 + 1);
}

#[test]
fn byte_identical_reruns() {
    for (cmd, file, table) in [
        ("match", "three_events.toml", "events.csv"),
        ("detect-walls", "shoebox.toml", "walls.csv"),
        ("solve", "two_solutions_planar.toml", "events.csv"),
    ] {
        let (_, a) = run_to_dir(cmd, &scenario(file), &[]);
        let (_, b) = run_to_dir(cmd, &scenario(file), &[]);
        assert_eq!(read(&a, table), read(&b, table));
        assert_eq!(read(&a, "report.txt"), read(&b, "report.txt"));
    }
    let (_, a) = run_to_dir("goodness", &scenario("shoebox.toml"), &["--trials", "5", "--seed", "9"]);
    let (_, b) = run_to_dir("goodness", &scenario("shoebox.toml"), &["--trials", "5", "--seed", "9"]);
    assert_eq!(read(&a, "report.txt"), read(&b, "report.txt"));
    assert!(read(&a, "report.txt").contains("seed = 9"));
}

#[test]
fn speed_round_trip() {
    let text = std::fs::read_to_string(scenario("shoebox.toml")).unwrap();
    let unit = text
        .replace("speed = 343", "speed = 1")
        .replace("emission_time = 0.25", &format!("emission_time = {}", 0.25 * 343.0));
    assert_ne!(unit, text);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("unit.toml");
    std::fs::write(&path, unit).unwrap();

    let (_, phys) = run_to_dir("detect-walls", &scenario("shoebox.toml"), &[]);
    let (_, norm) = run_to_dir("detect-walls", &path, &[]);
    assert_csv_close(&read(&phys, "walls.csv"), &read(&norm, "walls.csv"), 1e-9);
    let scaled: String = {
        let csv = read(&norm, "events.csv");
        let mut lines = csv.lines();
        let mut out = format!("{}\n", lines.next().unwrap());
        for l in lines {
            let mut f: Vec<String> = l.split(',').map(str::to_string).collect();
            f[0] = (f[0].parse::<f64>().unwrap() / 343.0).to_string();
            out.push_str(&f.join(","));
            out.push('\n');
        }
        out
    };
    let physical = read(&phys, "events.csv");
    let strip_residual = |csv: &str| -> String {
        csv.lines()
            .map(|l| l.rsplit_once(',').unwrap().0.to_string())
            .collect::<Vec<_>>()
            .join("\n")
    };
    assert_csv_close(&strip_residual(&physical), &strip_residual(&scaled), 1e-9);
}

#[test]
fn ambiguity_can_be_dropped() {
    let (_, keep) = run_to_dir("match", &scenario("two_solutions_3d.toml"), &[]);
    assert_eq!(rows(&read(&keep, "events.csv")).len(), 2);
    assert!(read(&keep, "report.txt").contains("ambiguous"));
    let (out, drop) = run_to_dir(
        "match",
        &scenario("two_solutions_3d.toml"),
        &["--keep-ambiguous", "false"],
    );
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(rows(&read(&drop, "events.csv")).len(), 0);
    assert!(read(&drop, "report.txt").contains("dropped_ambiguous = 1"));
}

fn write_temp(text: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.toml");
    std::fs::write(&path, text).unwrap();
    (dir, path)
}

#[test]
fn exit_codes() {
    let (_d1, bad_toml) = write_temp("dimension = 2\nsensors = [[1, 0], [0, 1]\n");
    let out = tdoa(&["solve", bad_toml.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let (_d2, empty) = write_temp("dimension = 2\nsensors = []\n");
    assert_eq!(tdoa(&["solve", empty.to_str().unwrap()]).status.code(), Some(2));

    assert_eq!(tdoa(&["solve", "/nonexistent/scenario.toml"]).status.code(), Some(2));
    assert_eq!(tdoa(&["bogus", "x"]).status.code(), Some(2));

    let wrong = tdoa(&["detect-walls", scenario("spurious_root.toml").to_str().unwrap()]);
    assert_eq!(wrong.status.code(), Some(2));

    let budget = tdoa(&[
        "match",
        scenario("three_events.toml").to_str().unwrap(),
        "--budget",
        "10",
    ]);
    assert_eq!(budget.status.code(), Some(2));

    let (_d3, collinear) =
        write_temp("dimension = 2\nsensors = [[0, 0], [1, 0], [2, 0]]\nreception_table = [[1], [1.5], [2.2]]\n");
    let out = tdoa(&["solve", collinear.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn loader_errors() {
    let (_d, mismatch) = write_temp(
        "dimension = 3\nsensors = [[0,0,0],[1,0,0],[0,1,0],[0,0,1]]\n[room]\nloudspeaker = [0.2, 0.2, 0.2]\nwalls = [{ normal = [1, 0], offset = 3 }]\n",
    );
    assert!(matches!(load_scenario(&mismatch), Err(ScenarioError::Validation(_))));
    let sc = load_scenario(&scenario("two_solutions_3d.toml")).unwrap();
    assert_eq!(sc.sensors.position(3)[1], -16.0 / 7.0);
}
