//! Closed-form pseudo-range multilateration in any dimension `n ≥ 2`.
//!
//! Units: time is measured in distance units, i.e. the signal speed is 1.
//! A sensor at `a_i` hears an emission `(t, x)` at `t_i = t + ‖a_i − x‖`.
//!
//! Two routes are available:
//!
//! * **full rank**: the rows `(−2t_i, 2a_iᵀ, −1)` form a matrix `A` with
//!   `A·(t, x, ‖x‖² − t²) = (‖a_i‖² − t_i²)`. When `A` has rank `n + 2`
//!   the least-squares solution is unique.
//! * **quadratic**: with `Ã` the rows `(2a_iᵀ, −1)` (rank `n + 1` iff the
//!   sensors affinely span the space), the same equations give
//!   `x = t·u + v` and a quadratic `(‖u‖² − 1)t² + (2uᵀv − α)t + ‖v‖² − β = 0`.
//!   Its roots are exactly the solutions of `‖a_i − x‖ = |t_i − t|`; a root
//!   with some `t_i < t` is spurious (the signal would arrive before it left).
//!
//! Internally both routes run on a translated and rescaled copy of the scene
//! (sensor centroid at the origin, earliest reception at time 0, sensor
//! diameter 1). The rank of `A` and the roots are invariant under that change
//! of frame; the results are mapped back before they are returned.

use crate::error::{Error, Result};
use crate::numkernel::{self, dist, dot, least_squares_solve, numeric_rank, solve_quadratic, Matrix, QuadraticRoots};

/// Default absolute threshold on the (dimensionless) leading coefficient
/// `‖u‖² − 1` below which the quadratic is treated as linear.
pub const DEFAULT_DEGENERATE_TOL: f64 = 1e-9;

/// Relative guard band for the causality test `t_i ≥ t`.
pub const DEFAULT_TIME_TOL_REL: f64 = 1e-9;

/// Positions of `m` sensors in `R^n`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorArray {
    dim: usize,
    positions: Vec<Vec<f64>>,
}

impl SensorArray {
    /// Validates dimension (`n ≥ 2`), finiteness and pairwise distinctness.
    ///
    /// At least two sensors are required here; the solvers additionally
    /// require `m ≥ n + 1`.
    pub fn new(positions: Vec<Vec<f64>>) -> Result<Self> {
        let dim = positions.first().map_or(0, Vec::len);
        if dim < 2 {
            return Err(Error::Invalid(format!(
                "sensor dimension must be at least 2, got {dim}"
            )));
        }
        if positions.len() < 2 {
            return Err(Error::Invalid(format!(
                "need at least 2 sensors, got {}",
                positions.len()
            )));
        }
        for p in &positions {
            if p.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: p.len(),
                });
            }
            if p.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("sensor position"));
            }
        }
        for i in 0..positions.len() {
            for j in i + 1..positions.len() {
                if positions[i] == positions[j] {
                    return Err(Error::Invalid(format!("sensors {i} and {j} coincide")));
                }
            }
        }
        Ok(Self { dim, positions })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn position(&self, i: usize) -> &[f64] {
        &self.positions[i]
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        dist(&self.positions[i], &self.positions[j])
    }

    /// Largest pairwise sensor distance.
    pub fn diameter(&self) -> f64 {
        let m = self.len();
        let mut d: f64 = 0.0;
        for i in 0..m {
            for j in i + 1..m {
                d = d.max(self.distance(i, j));
            }
        }
        d
    }

    pub fn centroid(&self) -> Vec<f64> {
        let m = self.len() as f64;
        (0..self.dim)
            .map(|k| self.positions.iter().map(|p| p[k]).sum::<f64>() / m)
            .collect()
    }

    /// Dimension of the affine hull, decided with [`numeric_rank`].
    pub fn affine_rank(&self, rel_tol: f64) -> usize {
        affine_rank(&self.positions, rel_tol)
    }

    /// Whether the sensors are not contained in a common affine hyperplane.
    pub fn spans(&self, rel_tol: f64) -> bool {
        self.affine_rank(rel_tol) == self.dim
    }

    /// Reception times of an emission event (speed 1).
    pub fn reception_times(&self, event: &EmissionEvent) -> Vec<f64> {
        self.positions
            .iter()
            .map(|a| event.time + dist(a, &event.position))
            .collect()
    }

    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        Self::new(indices.iter().map(|&i| self.positions[i].clone()).collect())
    }

    /// Applies `p ↦ f(p)` to every sensor.
    pub fn map_positions(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        Self::new(self.positions.iter().map(|p| f(p)).collect())
    }
}

pub(crate) fn affine_rank(points: &[Vec<f64>], rel_tol: f64) -> usize {
    let Some(first) = points.first() else {
        return 0;
    };
    let rows: Vec<Vec<f64>> = points[1..]
        .iter()
        .map(|p| p.iter().zip(first).map(|(a, b)| a - b).collect())
        .collect();
    if rows.is_empty() {
        return 0;
    }
    Matrix::from_rows(&rows).map_or(0, |m| numeric_rank(&m, rel_tol))
}

/// A point in space-time: emission time and source position.
#[derive(Debug, Clone, PartialEq)]
pub struct EmissionEvent {
    pub time: f64,
    pub position: Vec<f64>,
}

impl EmissionEvent {
    pub fn new(time: f64, position: Vec<f64>) -> Self {
        Self { time, position }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolveConfig {
    /// Relative singular value threshold for every rank decision.
    pub rank_tol: f64,
    /// Absolute causality guard band; `None` uses
    /// `1e-9 × (max t_i − min t_i + diameter)`.
    pub time_tol: Option<f64>,
    /// Threshold on the normalized quadratic coefficients.
    pub degenerate_tol: f64,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            rank_tol: numkernel::DEFAULT_RANK_TOL,
            time_tol: None,
            degenerate_tol: DEFAULT_DEGENERATE_TOL,
        }
    }
}

impl SolveConfig {
    fn time_tol_for(&self, sensors: &SensorArray, times: &[f64]) -> f64 {
        self.time_tol.unwrap_or_else(|| {
            let (lo, hi) = min_max(times);
            DEFAULT_TIME_TOL_REL * (hi - lo + sensors.diameter())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolvePath {
    FullRank,
    Quadratic,
}

impl SolvePath {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolvePath::FullRank => "full-rank",
            SolvePath::Quadratic => "quadratic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub event: EmissionEvent,
    /// Some sensor would have heard the signal before it was emitted.
    pub spurious: bool,
}

/// Quantities of the quadratic route, expressed in the caller's frame.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticDiagnostics {
    /// Direction of the solution line `x = t·u + v`.
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    /// `(‖u‖² − 1, 2uᵀv − α, ‖v‖² − β)`.
    pub coeffs: [f64; 3],
    pub roots: QuadraticRoots,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub path: SolvePath,
    /// One or two candidates, ascending by emission time.
    pub candidates: Vec<Candidate>,
    /// Numeric rank of `A` (0 when `A` was not formed, i.e. `m < n + 2`).
    pub rank_of_a: usize,
    pub quadratic: Option<QuadraticDiagnostics>,
}

impl SolveResult {
    pub fn non_spurious(&self) -> impl Iterator<Item = &Candidate> {
        self.candidates.iter().filter(|c| !c.spurious)
    }
}

/// Translation and scaling that brings a scene to unit size.
struct Frame {
    origin: Vec<f64>,
    t_ref: f64,
    scale: f64,
}

impl Frame {
    fn new(sensors: &SensorArray, times: &[f64]) -> Self {
        let diameter = sensors.diameter();
        Self {
            origin: sensors.centroid(),
            t_ref: min_max(times).0,
            scale: if diameter > 0.0 { diameter } else { 1.0 },
        }
    }

    fn positions(&self, sensors: &SensorArray) -> Vec<Vec<f64>> {
        sensors
            .positions()
            .iter()
            .map(|p| p.iter().zip(&self.origin).map(|(a, o)| (a - o) / self.scale).collect())
            .collect()
    }

    fn times(&self, times: &[f64]) -> Vec<f64> {
        times.iter().map(|t| (t - self.t_ref) / self.scale).collect()
    }

    fn event(&self, time: f64, position: &[f64]) -> EmissionEvent {
        EmissionEvent {
            time: self.t_ref + self.scale * time,
            position: position
                .iter()
                .zip(&self.origin)
                .map(|(x, o)| o + self.scale * x)
                .collect(),
        }
    }
}

fn check_times(sensors: &SensorArray, times: &[f64]) -> Result<()> {
    if times.len() != sensors.len() {
        return Err(Error::LengthMismatch {
            expected: sensors.len(),
            actual: times.len(),
        });
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite("reception times"));
    }
    Ok(())
}

fn a_matrix(positions: &[Vec<f64>], times: &[f64]) -> Matrix {
    let n = positions[0].len();
    let mut a = Matrix::zeros(positions.len(), n + 2);
    for (i, (p, t)) in positions.iter().zip(times).enumerate() {
        a[(i, 0)] = -2.0 * t;
        for k in 0..n {
            a[(i, k + 1)] = 2.0 * p[k];
        }
        a[(i, n + 1)] = -1.0;
    }
    a
}

fn rhs(positions: &[Vec<f64>], times: &[f64]) -> Vec<f64> {
    positions.iter().zip(times).map(|(p, t)| dot(p, p) - t * t).collect()
}

/// The `m × (n+2)` matrix with rows `(−2t_i, 2a_iᵀ, −1)`, in the caller's frame.
pub fn build_a(sensors: &SensorArray, times: &[f64]) -> Result<Matrix> {
    check_times(sensors, times)?;
    Ok(a_matrix(sensors.positions(), times))
}

/// Rank of `A`, evaluated in the normalized frame.
pub fn rank_of_a(sensors: &SensorArray, times: &[f64], rank_tol: f64) -> Result<usize> {
    check_times(sensors, times)?;
    let frame = Frame::new(sensors, times);
    Ok(numeric_rank(
        &a_matrix(&frame.positions(sensors), &frame.times(times)),
        rank_tol,
    ))
}

/// Unique emission event when `A` has rank `n + 2`.
pub fn solve_full_rank(sensors: &SensorArray, times: &[f64], config: &SolveConfig) -> Result<EmissionEvent> {
    check_times(sensors, times)?;
    let n = sensors.dim();
    let frame = Frame::new(sensors, times);
    let pos = frame.positions(sensors);
    let ts = frame.times(times);
    let y = least_squares_solve(&a_matrix(&pos, &ts), &rhs(&pos, &ts), config.rank_tol)?;
    Ok(frame.event(y[0], &y[1..=n]))
}

/// Quadratic route, valid whenever the sensors affinely span `R^n`.
///
/// Returns every real solution of `‖a_i − x‖ = |t_i − t|`, flagging the ones
/// that violate causality.
pub fn solve_rank_deficient(sensors: &SensorArray, times: &[f64], config: &SolveConfig) -> Result<SolveResult> {
    check_times(sensors, times)?;
    let n = sensors.dim();
    if sensors.len() < n + 1 {
        return Err(Error::Invalid(format!(
            "need at least {} sensors in dimension {n}, got {}",
            n + 1,
            sensors.len()
        )));
    }
    let frame = Frame::new(sensors, times);
    let pos = frame.positions(sensors);
    let ts = frame.times(times);

    let affine = affine_rank(&pos, config.rank_tol);
    if affine < n {
        return Err(Error::NotSpanning { dim: n, rank: affine });
    }

    let m = pos.len();
    let mut a_tilde = Matrix::zeros(m, n + 1);
    for (i, p) in pos.iter().enumerate() {
        for k in 0..n {
            a_tilde[(i, k)] = 2.0 * p[k];
        }
        a_tilde[(i, n)] = -1.0;
    }
    let two_t: Vec<f64> = ts.iter().map(|t| 2.0 * t).collect();
    let ua = least_squares_solve(&a_tilde, &two_t, config.rank_tol)?;
    let vb = least_squares_solve(&a_tilde, &rhs(&pos, &ts), config.rank_tol)?;
    let (u, alpha) = (&ua[..n], ua[n]);
    let (v, beta) = (&vb[..n], vb[n]);

    let qa = dot(u, u) - 1.0;
    let qb = 2.0 * dot(u, v) - alpha;
    let qc = dot(v, v) - beta;
    let roots = solve_quadratic(qa, qb, qc, config.degenerate_tol);
    let s_roots = match roots {
        QuadraticRoots::DegenerateAll => return Err(Error::TheoremViolation),
        QuadraticRoots::NoReal => return Err(Error::NoRealSolution),
        r => r.roots(),
    };

    let time_tol = config.time_tol_for(sensors, times);
    let latest_allowed = min_max(times).0 + time_tol;
    let mut candidates: Vec<Candidate> = s_roots
        .iter()
        .map(|&s| {
            let x: Vec<f64> = u.iter().zip(v).map(|(ui, vi)| s * ui + vi).collect();
            let event = frame.event(s, &x);
            let spurious = event.time > latest_allowed;
            Candidate { event, spurious }
        })
        .collect();
    candidates.sort_by(|a, b| a.event.time.total_cmp(&b.event.time));

    // back to the caller's frame: t = t_ref + L·s, x = o + (t − t_ref)·u + L·v'
    let (l, t0) = (frame.scale, frame.t_ref);
    let coeffs = [qa, l * qb - 2.0 * qa * t0, qa * t0 * t0 - l * qb * t0 + l * l * qc];
    let v_orig: Vec<f64> = frame
        .origin
        .iter()
        .zip(u.iter().zip(v))
        .map(|(o, (ui, vi))| o - t0 * ui + l * vi)
        .collect();
    let alpha_orig = 2.0 * dot(u, &v_orig) - coeffs[1];
    let beta_orig = dot(&v_orig, &v_orig) - coeffs[2];

    Ok(SolveResult {
        path: SolvePath::Quadratic,
        candidates,
        rank_of_a: 0,
        quadratic: Some(QuadraticDiagnostics {
            u: u.to_vec(),
            v: v_orig,
            alpha: alpha_orig,
            beta: beta_orig,
            coeffs,
            roots,
        }),
    })
}

/// Dispatches to the full-rank route when `m ≥ n + 2` and `A` has rank
/// `n + 2`, otherwise to the quadratic route.
pub fn solve(sensors: &SensorArray, times: &[f64], config: &SolveConfig) -> Result<SolveResult> {
    check_times(sensors, times)?;
    let n = sensors.dim();
    if sensors.len() < n + 1 {
        return Err(Error::Invalid(format!(
            "need at least {} sensors in dimension {n}, got {}",
            n + 1,
            sensors.len()
        )));
    }
    let rank = if sensors.len() >= n + 2 {
        rank_of_a(sensors, times, config.rank_tol)?
    } else {
        0
    };
    if rank == n + 2 {
        let event = solve_full_rank(sensors, times, config)?;
        let latest_allowed = min_max(times).0 + config.time_tol_for(sensors, times);
        let spurious = event.time > latest_allowed;
        return Ok(SolveResult {
            path: SolvePath::FullRank,
            candidates: vec![Candidate { event, spurious }],
            rank_of_a: rank,
            quadratic: None,
        });
    }
    let mut result = solve_rank_deficient(sensors, times, config)?;
    result.rank_of_a = rank;
    Ok(result)
}

/// Largest deviation `|‖a_i − x‖ − (t_i − t)|` (causal model).
pub fn causal_residual(sensors: &SensorArray, times: &[f64], event: &EmissionEvent) -> f64 {
    sensors
        .positions()
        .iter()
        .zip(times)
        .map(|(a, ti)| (dist(a, &event.position) - (ti - event.time)).abs())
        .fold(0.0, f64::max)
}

/// Largest deviation `|‖a_i − x‖ − |t_i − t||` (absolute-value model).
pub fn absolute_residual(sensors: &SensorArray, times: &[f64], event: &EmissionEvent) -> f64 {
    sensors
        .positions()
        .iter()
        .zip(times)
        .map(|(a, ti)| (dist(a, &event.position) - (ti - event.time).abs()).abs())
        .fold(0.0, f64::max)
}

/// Result of [`check_geometry`].
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryReport {
    /// The sensors are not contained in an affine hyperplane.
    pub noncoplanar: bool,
    /// `Some` only when `m = n + 2`; then `true` iff no sign pattern fails.
    pub condition_ok: Option<bool>,
    /// Sign vectors `ε` (with `ε_m = +1`) whose determinant vanishes.
    pub failing_sign_patterns: Vec<Vec<i8>>,
    /// Smallest normalized determinant over all evaluated sign patterns.
    pub min_normalized_det: Option<f64>,
    /// `(n+1)`-subsets of sensors that are affinely degenerate.
    pub degenerate_subsets: Vec<Vec<usize>>,
}

/// Checks affine span and, for `m = n + 2`, the sign-pattern determinant
/// condition under which a rank drop of `A` is confined to a
/// lower-dimensional set of source positions near the origin.
///
/// The matrix for sign vector `ε` has rows `(ε_i‖a_i‖, a_iᵀ, 1)`; since
/// negating `ε` only flips the sign of the determinant, the patterns with
/// `ε_m = +1` suffice. A determinant fails when its absolute value divided
/// by the product of its row norms is at most `tol`.
pub fn check_geometry(sensors: &SensorArray, tol: f64) -> GeometryReport {
    let n = sensors.dim();
    let m = sensors.len();
    let noncoplanar = sensors.spans(tol);

    let mut degenerate_subsets = Vec::new();
    if m > n + 1 {
        for subset in combinations(m, n + 1) {
            let pts: Vec<Vec<f64>> = subset.iter().map(|&i| sensors.positions[i].clone()).collect();
            if affine_rank(&pts, tol) < n {
                degenerate_subsets.push(subset);
            }
        }
    }

    if m != n + 2 {
        return GeometryReport {
            noncoplanar,
            condition_ok: None,
            failing_sign_patterns: Vec::new(),
            min_normalized_det: None,
            degenerate_subsets,
        };
    }

    let norms: Vec<f64> = sensors.positions().iter().map(|a| numkernel::norm(a)).collect();
    let row_norm_product: f64 = norms.iter().map(|r| (2.0 * r * r + 1.0).sqrt()).product();
    let mut failing = Vec::new();
    let mut min_det = f64::INFINITY;
    for mask in 0u32..(1 << (m - 1)) {
        let eps: Vec<i8> = (0..m)
            .map(|i| if i + 1 < m && mask & (1 << i) != 0 { -1 } else { 1 })
            .collect();
        let mut mat = Matrix::zeros(m, n + 2);
        for (i, a) in sensors.positions().iter().enumerate() {
            mat[(i, 0)] = f64::from(eps[i]) * norms[i];
            for k in 0..n {
                mat[(i, k + 1)] = a[k];
            }
            mat[(i, n + 1)] = 1.0;
        }
        let normalized = numkernel::determinant(&mat).abs() / row_norm_product;
        min_det = min_det.min(normalized);
        if normalized <= tol {
            failing.push(eps);
        }
    }
    GeometryReport {
        noncoplanar,
        condition_ok: Some(failing.is_empty()),
        failing_sign_patterns: failing,
        min_normalized_det: Some(min_det),
        degenerate_subsets,
    }
}

/// All `k`-subsets of `0..m` in lexicographic order.
pub(crate) fn combinations(m: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, m: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..m {
            if m - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, m, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if k <= m {
        rec(0, m, k, &mut Vec::with_capacity(k), &mut out);
    }
    out
}

fn min_max(xs: &[f64]) -> (f64, f64) {
    xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
        (lo.min(x), hi.max(x))
    })
}
