//! Camera-to-robot calibration from marker correspondences.
//!
//! The model maps a camera pixel `p_c` to the table plane of the robot as
//! `p_r = T * p_c - offset`, where `T = R(theta0) * diag(theta1, theta2)` is a
//! rotation with independent axis scales (orthogonal columns by
//! construction) and `offset = (theta3, theta4)`.
//!
//! Parameters minimise the sum of squared residual norms
//! `|offset + p_r - T * p_c|^2` over all markers. The squared form is smooth
//! and shares its minimiser with the plain sum of norms whenever the fit is
//! exact.

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix4, Matrix5, Vector4, Vector5};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Point2;

/// One marker measured in both frames.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkerPair {
    /// Robot-frame position, meters.
    pub robot_xy: Point2,
    /// Camera-frame position, pixels.
    pub camera_xy: Point2,
}

impl MarkerPair {
    pub fn new(robot_xy: Point2, camera_xy: Point2) -> Self {
        Self { robot_xy, camera_xy }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationParams {
    /// Rotation angle, radians, in (-pi, pi].
    pub theta0: f64,
    /// Scale of the camera x axis, meters per pixel.
    pub theta1: f64,
    /// Scale of the camera y axis, meters per pixel.
    pub theta2: f64,
    /// Offset x, meters.
    pub theta3: f64,
    /// Offset y, meters.
    pub theta4: f64,
    /// Root of the final objective, meters.
    pub residual: f64,
}

impl CalibrationParams {
    pub fn identity() -> Self {
        Self { theta0: 0.0, theta1: 1.0, theta2: 1.0, theta3: 0.0, theta4: 0.0, residual: 0.0 }
    }

    pub fn new(theta0: f64, theta1: f64, theta2: f64, offset: Point2) -> Self {
        Self { theta0, theta1, theta2, theta3: offset.x, theta4: offset.y, residual: 0.0 }
    }

    /// Row-major 2x2 scaled transform.
    pub fn transform(&self) -> [[f64; 2]; 2] {
        let (s, c) = self.theta0.sin_cos();
        [[self.theta1 * c, -self.theta2 * s], [self.theta1 * s, self.theta2 * c]]
    }

    pub fn offset(&self) -> Point2 {
        Point2::new(self.theta3, self.theta4)
    }

    pub fn is_finite(&self) -> bool {
        [self.theta0, self.theta1, self.theta2, self.theta3, self.theta4]
            .iter()
            .all(|v| v.is_finite())
    }

    pub fn pixel_to_robot(&self, camera_xy: Point2) -> Point2 {
        pixel_to_robot(self, camera_xy)
    }

    /// Inverse mapping, robot meters to camera pixels.
    pub fn robot_to_pixel(&self, robot_xy: Point2) -> Point2 {
        let q = robot_xy + self.offset();
        let (s, c) = self.theta0.sin_cos();
        // R^T q, then undo the axis scales
        let rx = c * q.x + s * q.y;
        let ry = -s * q.x + c * q.y;
        Point2::new(rx / self.theta1, ry / self.theta2)
    }

    /// Serialises as `key=value` lines.
    pub fn to_kv_text(&self) -> String {
        format!(
            "theta0={:.17e}\ntheta1={:.17e}\ntheta2={:.17e}\ntheta3={:.17e}\ntheta4={:.17e}\nresidual={:.17e}\n",
            self.theta0, self.theta1, self.theta2, self.theta3, self.theta4, self.residual
        )
    }

    pub fn from_kv_text(text: &str) -> Result<Self, FormatError> {
        let mut vals: [Option<f64>; 6] = [None; 6];
        const KEYS: [&str; 6] = ["theta0", "theta1", "theta2", "theta3", "theta4", "residual"];
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| FormatError::new(n + 1, "expected key=value"))?;
            let slot = KEYS
                .iter()
                .position(|key| *key == k.trim())
                .ok_or_else(|| FormatError::new(n + 1, format!("unknown key `{}`", k.trim())))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| FormatError::new(n + 1, format!("bad number `{}`", v.trim())))?;
            vals[slot] = Some(v);
        }
        let get = |i: usize| vals[i].ok_or_else(|| FormatError::new(0, format!("missing `{}`", KEYS[i])));
        Ok(Self {
            theta0: get(0)?,
            theta1: get(1)?,
            theta2: get(2)?,
            theta3: get(3)?,
            theta4: get(4)?,
            residual: vals[5].unwrap_or(0.0),
        })
    }
}

impl fmt::Display for CalibrationParams {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_kv_text())
    }
}

impl FromStr for CalibrationParams {
    type Err = FormatError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::from_kv_text(s)
    }
}

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("need at least 4 marker pairs, got {0}")]
    InsufficientData(usize),
    #[error("camera points are collinear or coincident")]
    RankDeficient,
    #[error("invalid marker pair {index}: {reason}")]
    InvalidPair { index: usize, reason: &'static str },
    #[error("solver did not converge within {iterations} iterations (best residual {:.3e} m)", best.residual)]
    Convergence { iterations: usize, best: CalibrationParams },
}

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct FormatError {
    pub line: usize,
    pub message: String,
}

impl FormatError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self { line, message: message.into() }
    }
}

/// Applies the calibrated mapping `T * p_c - offset`.
pub fn pixel_to_robot(params: &CalibrationParams, camera_xy: Point2) -> Point2 {
    let t = params.transform();
    Point2::new(
        t[0][0] * camera_xy.x + t[0][1] * camera_xy.y - params.theta3,
        t[1][0] * camera_xy.x + t[1][1] * camera_xy.y - params.theta4,
    )
}

/// Sum of squared residual norms, square meters.
pub fn objective(params: &CalibrationParams, pairs: &[MarkerPair]) -> f64 {
    pairs
        .iter()
        .map(|p| {
            let mapped = pixel_to_robot(params, p.camera_xy);
            let r = p.robot_xy - mapped;
            r.dot(r)
        })
        .sum()
}

/// Root of [`objective`], meters. Zero exactly when every pair fits.
pub fn calibration_residual(params: &CalibrationParams, pairs: &[MarkerPair]) -> f64 {
    objective(params, pairs).sqrt()
}

/// Result of a solve, with the per-iteration objective of the winning start.
#[derive(Clone, Debug)]
pub struct CalibrationFit {
    pub params: CalibrationParams,
    /// Objective after every accepted iteration, starting with the initial
    /// guess. Non-increasing.
    pub history: Vec<f64>,
    pub iterations: usize,
    pub start_angle: f64,
}

#[derive(Clone, Debug)]
pub struct CalibrationSolver {
    pub max_iterations: usize,
    pub step_tolerance: f64,
    pub start_angles: Vec<f64>,
}

impl Default for CalibrationSolver {
    fn default() -> Self {
        Self {
            max_iterations: 200,
            step_tolerance: 1e-10,
            start_angles: vec![0.0, FRAC_PI_2, PI, 3.0 * FRAC_PI_2],
        }
    }
}

/// Fits the calibration with the default solver.
pub fn fit_calibration(pairs: &[MarkerPair]) -> Result<CalibrationParams, CalibError> {
    CalibrationSolver::default().solve(pairs).map(|fit| fit.params)
}

/// Camera points are centred and scaled to unit RMS radius before solving.
struct Normalized {
    center: Point2,
    scale: f64,
    q: Vec<Point2>,
    r: Vec<Point2>,
}

impl Normalized {
    fn new(pairs: &[MarkerPair]) -> Result<Self, CalibError> {
        let n = pairs.len() as f64;
        let center = pairs.iter().fold(Point2::default(), |a, p| a + p.camera_xy) * (1.0 / n);
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for p in pairs {
            let d = p.camera_xy - center;
            sxx += d.x * d.x;
            sxy += d.x * d.y;
            syy += d.y * d.y;
        }
        let scale = ((sxx + syy) / n).sqrt();
        if !(scale > 0.0) {
            return Err(CalibError::RankDeficient);
        }
        // smallest eigenvalue of the 2x2 scatter relative to the largest
        let tr = sxx + syy;
        let det = sxx * syy - sxy * sxy;
        let disc = (0.25 * tr * tr - det).max(0.0).sqrt();
        let lo = 0.5 * tr - disc;
        let hi = 0.5 * tr + disc;
        if lo <= 1e-12 * hi {
            return Err(CalibError::RankDeficient);
        }
        let q = pairs.iter().map(|p| (p.camera_xy - center) * (1.0 / scale)).collect();
        let r = pairs.iter().map(|p| p.robot_xy).collect();
        Ok(Self { center, scale, q, r })
    }

    fn residuals(&self, th: &Vector5<f64>) -> Vec<Point2> {
        let (s, c) = th[0].sin_cos();
        self.q
            .iter()
            .zip(&self.r)
            .map(|(q, r)| {
                let tq = Point2::new(th[1] * c * q.x - th[2] * s * q.y, th[1] * s * q.x + th[2] * c * q.y);
                Point2::new(th[3] + r.x - tq.x, th[4] + r.y - tq.y)
            })
            .collect()
    }

    fn cost(&self, th: &Vector5<f64>) -> f64 {
        self.residuals(th).iter().map(|r| r.dot(*r)).sum()
    }

    /// Normal equations `J^T J` and gradient `J^T r`.
    fn normal_equations(&self, th: &Vector5<f64>) -> (Matrix5<f64>, Vector5<f64>) {
        let (s, c) = th[0].sin_cos();
        let res = self.residuals(th);
        let mut jtj = Matrix5::zeros();
        let mut jtr = Vector5::zeros();
        for (q, r) in self.q.iter().zip(&res) {
            let jx = Vector5::new(th[1] * s * q.x + th[2] * c * q.y, -c * q.x, s * q.y, 1.0, 0.0);
            let jy = Vector5::new(-th[1] * c * q.x + th[2] * s * q.y, -s * q.x, -c * q.y, 0.0, 1.0);
            jtj += jx * jx.transpose() + jy * jy.transpose();
            jtr += jx * r.x + jy * r.y;
        }
        (jtj, jtr)
    }

    /// Scales and offset solved linearly for a fixed angle.
    fn linear_start(&self, angle: f64) -> Vector5<f64> {
        let (s, c) = angle.sin_cos();
        // residual = offset + r - th1 * a - th2 * b, unknowns (th1, th2, ox, oy)
        let mut ata = Matrix4::zeros();
        let mut atb = Vector4::zeros();
        for (q, r) in self.q.iter().zip(&self.r) {
            let row_x = Vector4::new(q.x * c, -q.y * s, -1.0, 0.0);
            let row_y = Vector4::new(q.x * s, q.y * c, 0.0, -1.0);
            ata += row_x * row_x.transpose() + row_y * row_y.transpose();
            atb += row_x * r.x + row_y * r.y;
        }
        let sol = ata.lu().solve(&atb).unwrap_or_else(|| Vector4::new(1.0, 1.0, 0.0, 0.0));
        Vector5::new(angle, sol[0], sol[1], sol[2], sol[3])
    }

    fn denormalize(&self, th: &Vector5<f64>) -> CalibrationParams {
        let mut p = CalibrationParams::new(
            th[0],
            th[1] / self.scale,
            th[2] / self.scale,
            Point2::new(th[3], th[4]),
        );
        // offset' = offset - T * center  =>  offset = offset' + T * center
        let t = p.transform();
        p.theta3 += t[0][0] * self.center.x + t[0][1] * self.center.y;
        p.theta4 += t[1][0] * self.center.x + t[1][1] * self.center.y;
        p
    }
}

struct StartOutcome {
    theta: Vector5<f64>,
    history: Vec<f64>,
    iterations: usize,
    converged: bool,
    start: f64,
}

impl CalibrationSolver {
    pub fn solve(&self, pairs: &[MarkerPair]) -> Result<CalibrationFit, CalibError> {
        if pairs.len() < 4 {
            return Err(CalibError::InsufficientData(pairs.len()));
        }
        for (index, p) in pairs.iter().enumerate() {
            if !p.robot_xy.is_finite() || !p.camera_xy.is_finite() {
                return Err(CalibError::InvalidPair { index, reason: "non-finite coordinate" });
            }
            if p.camera_xy.x < 0.0 || p.camera_xy.y < 0.0 {
                return Err(CalibError::InvalidPair { index, reason: "negative pixel coordinate" });
            }
        }
        let norm = Normalized::new(pairs)?;

        let outcomes: Vec<StartOutcome> =
            self.start_angles.iter().map(|&a| self.run_start(&norm, a)).collect();

        let mut best: Option<(f64, &StartOutcome, Vector5<f64>)> = None;
        let mut best_any: Option<(f64, Vector5<f64>)> = None;
        for o in &outcomes {
            let cost = *o.history.last().expect("history has the initial cost");
            if best_any.as_ref().is_none_or(|(c, _)| cost < *c) {
                best_any = Some((cost, o.theta));
            }
            if !o.converged {
                continue;
            }
            let Some(th) = canonical(o.theta) else { continue };
            if best.as_ref().is_none_or(|(c, _, _)| cost < *c) {
                best = Some((cost, o, th));
            }
        }

        match best {
            Some((_, o, th)) => {
                let mut params = norm.denormalize(&th);
                params.residual = calibration_residual(&params, pairs);
                Ok(CalibrationFit {
                    params,
                    history: o.history.clone(),
                    iterations: o.iterations,
                    start_angle: o.start,
                })
            }
            None => {
                let (_, th) = best_any.expect("at least one start");
                let th = canonical(th).unwrap_or(th);
                let mut params = norm.denormalize(&th);
                params.residual = calibration_residual(&params, pairs);
                Err(CalibError::Convergence { iterations: self.max_iterations, best: params })
            }
        }
    }

    /// Levenberg-Marquardt from one start angle. Only steps that lower the
    /// objective are accepted.
    fn run_start(&self, norm: &Normalized, angle: f64) -> StartOutcome {
        let mut th = norm.linear_start(angle);
        let mut cost = norm.cost(&th);
        let mut history = vec![cost];
        let mut lambda = 1e-3;
        let mut converged = false;
        let mut iterations = 0;
        while iterations < self.max_iterations {
            iterations += 1;
            let (jtj, jtr) = norm.normal_equations(&th);
            let mut damped = jtj;
            for i in 0..5 {
                damped[(i, i)] += lambda * jtj[(i, i)].max(1e-12);
            }
            let Some(step) = damped.cholesky().map(|ch| ch.solve(&(-jtr))) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = th + step;
            let new_cost = norm.cost(&candidate);
            if new_cost < cost {
                th = candidate;
                cost = new_cost;
                history.push(cost);
                lambda = (lambda * 0.1).max(1e-12);
            } else {
                lambda *= 10.0;
            }
            if step.norm() < self.step_tolerance || cost == 0.0 {
                converged = true;
                break;
            }
        }
        StartOutcome { theta: th, history, iterations, converged, start: angle }
    }
}

/// Folds a double sign flip of the scales into the angle and wraps it to
/// (-pi, pi]. Returns `None` for fits that need a reflection.
fn canonical(mut th: Vector5<f64>) -> Option<Vector5<f64>> {
    if th[1] < 0.0 && th[2] < 0.0 {
        th[0] += PI;
        th[1] = -th[1];
        th[2] = -th[2];
    }
    if !(th[1] > 0.0 && th[2] > 0.0) {
        return None;
    }
    th[0] = wrap_angle(th[0]);
    Some(th)
}

/// Wraps an angle to (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// Parses a whitespace-separated `rx ry cx cy` table; `#` starts a comment.
pub fn parse_marker_pairs(text: &str) -> Result<Vec<MarkerPair>, FormatError> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| FormatError::new(n + 1, format!("bad number `{t}`"))))
            .collect::<Result<_, _>>()?;
        if vals.len() != 4 {
            return Err(FormatError::new(n + 1, format!("expected 4 columns, got {}", vals.len())));
        }
        out.push(MarkerPair::new(Point2::new(vals[0], vals[1]), Point2::new(vals[2], vals[3])));
    }
    Ok(out)
}

pub fn format_marker_pairs(pairs: &[MarkerPair]) -> String {
    let mut s = String::from("# rx ry cx cy\n");
    for p in pairs {
        s.push_str(&format!(
            "{} {} {} {}\n",
            p.robot_xy.x, p.robot_xy.y, p.camera_xy.x, p.camera_xy.y
        ));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn square_pairs(params: &CalibrationParams, corners: &[Point2]) -> Vec<MarkerPair> {
        corners.iter().map(|&c| MarkerPair::new(params.pixel_to_robot(c), c)).collect()
    }

    fn pixel_corners() -> Vec<Point2> {
        vec![
            Point2::new(40.0, 30.0),
            Point2::new(600.0, 30.0),
            Point2::new(600.0, 450.0),
            Point2::new(40.0, 450.0),
        ]
    }

    #[test]
    fn identity_square() {
        let corners =
            [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)].map(|(x, y)| Point2::new(x, y));
        let pairs: Vec<_> = corners.iter().map(|&c| MarkerPair::new(c, c)).collect();
        let p = fit_calibration(&pairs).unwrap();
        assert!(p.theta0.abs() < 1e-9, "{p:?}");
        assert!((p.theta1 - 1.0).abs() < 1e-9);
        assert!((p.theta2 - 1.0).abs() < 1e-9);
        assert!(p.theta3.abs() < 1e-9 && p.theta4.abs() < 1e-9);
        assert!(p.residual < 1e-9);
    }

    #[test]
    fn recovers_thirty_degree_generator() {
        let truth = CalibrationParams::new(30f64.to_radians(), 0.002, 0.002, Point2::new(0.1, -0.05));
        let pairs = square_pairs(&truth, &pixel_corners());
        let p = fit_calibration(&pairs).unwrap();
        assert!((p.theta0 - truth.theta0).abs() < 1e-6);
        assert!((p.theta1 - truth.theta1).abs() < 1e-6);
        assert!((p.theta2 - truth.theta2).abs() < 1e-6);
        assert!((p.theta3 - truth.theta3).abs() < 1e-6);
        assert!((p.theta4 - truth.theta4).abs() < 1e-6);
        for pair in &pairs {
            assert!(p.pixel_to_robot(pair.camera_xy).distance(pair.robot_xy) < 1e-6);
        }
    }

    #[test]
    fn pixel_mapping_examples() {
        let id = CalibrationParams::identity();
        assert_eq!(pixel_to_robot(&id, Point2::new(5.0, 7.0)), Point2::new(5.0, 7.0));
        let shifted = CalibrationParams::new(0.0, 1.0, 1.0, Point2::new(1.0, 2.0));
        assert_eq!(pixel_to_robot(&shifted, Point2::new(0.0, 0.0)), Point2::new(-1.0, -2.0));
    }

    #[test]
    fn robot_to_pixel_inverts() {
        let p = CalibrationParams::new(-2.0, 0.0013, 0.0009, Point2::new(0.3, -0.2));
        let px = Point2::new(123.0, 456.0);
        let back = p.robot_to_pixel(p.pixel_to_robot(px));
        assert!(back.distance(px) < 1e-9);
    }

    #[test]
    fn residual_grows_with_perturbation() {
        let truth = CalibrationParams::new(0.4, 0.001, 0.0012, Point2::new(0.2, 0.1));
        let pairs = square_pairs(&truth, &pixel_corners());
        assert_eq!(calibration_residual(&truth, &pairs), 0.0);
        let id = CalibrationParams::identity();
        let id_pairs: Vec<_> = pixel_corners().iter().map(|&c| MarkerPair::new(c, c)).collect();
        assert_eq!(calibration_residual(&id, &id_pairs), 0.0);
        let mut last = 0.0;
        for k in 1..10 {
            let eps = k as f64 * 1e-3;
            let mut bumped = pairs.clone();
            bumped[0].robot_xy.x += eps;
            let r = calibration_residual(&truth, &bumped);
            assert!(r > last);
            last = r;
        }
    }

    #[test]
    fn too_few_pairs() {
        let pairs: Vec<_> = pixel_corners()[..3].iter().map(|&c| MarkerPair::new(c, c)).collect();
        assert!(matches!(fit_calibration(&pairs), Err(CalibError::InsufficientData(3))));
    }

    #[test]
    fn collinear_camera_points() {
        let pairs: Vec<_> = (0..5)
            .map(|i| {
                let c = Point2::new(10.0 * i as f64, 20.0 * i as f64);
                MarkerPair::new(c, c)
            })
            .collect();
        assert!(matches!(fit_calibration(&pairs), Err(CalibError::RankDeficient)));
        let same: Vec<_> =
            (0..4).map(|_| MarkerPair::new(Point2::new(1.0, 1.0), Point2::new(3.0, 3.0))).collect();
        assert!(matches!(fit_calibration(&same), Err(CalibError::RankDeficient)));
    }

    #[test]
    fn tiny_budget_reports_best_iterate() {
        let truth = CalibrationParams::new(1.0, 0.002, 0.001, Point2::new(0.1, -0.05));
        let mut pairs = square_pairs(&truth, &pixel_corners());
        pairs[2].robot_xy.x += 0.01;
        let solver = CalibrationSolver { max_iterations: 1, step_tolerance: 1e-30, ..Default::default() };
        match solver.solve(&pairs) {
            Err(CalibError::Convergence { best, iterations }) => {
                assert_eq!(iterations, 1);
                assert!(best.residual.is_finite());
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
    }

    #[test]
    fn kv_text_round_trip() {
        let p = CalibrationParams::new(0.5236, 0.002, 0.0021, Point2::new(0.1, -0.05));
        let back: CalibrationParams = p.to_kv_text().parse().unwrap();
        assert_eq!(back, p);
        assert!(CalibrationParams::from_kv_text("theta0=1\n").is_err());
        assert!(CalibrationParams::from_kv_text("bogus=1\n").is_err());
    }

    #[test]
    fn marker_table_parsing() {
        let text = "# header\n0.1 0.2 10 20\n\n0.3 0.4 30 40 # trailing\n";
        let pairs = parse_marker_pairs(text).unwrap();
        assert_eq!(pairs.len(), 2);
        assert_eq!(pairs[1].camera_xy, Point2::new(30.0, 40.0));
        let err = parse_marker_pairs("1 2 3\n").unwrap_err();
        assert_eq!(err.line, 1);
        assert_eq!(parse_marker_pairs(&format_marker_pairs(&pairs)).unwrap(), pairs);
    }

    #[test]
    fn wrap_angle_range() {
        assert_eq!(wrap_angle(PI), PI);
        assert!((wrap_angle(-PI) - PI).abs() < 1e-15);
        assert!((wrap_angle(3.0 * PI / 2.0) + PI / 2.0).abs() < 1e-12);
    }
}
