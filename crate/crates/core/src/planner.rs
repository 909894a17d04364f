//! Cut planning for slicing, point-to-point, trimming and cubing, and the
//! lift of planar cut paths into timed knife waypoints.
//!
//! Planar plans are in robot coordinates (meters). The trim path is
//! simplified in camera pixels, where its error bound is configured, and
//! mapped through the calibration afterwards.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::CalibrationParams;
use crate::geometry::{horizontal_crossings, polyline_length, vertical_crossings, Bounds, Point2};
use crate::vision::{fat_meat_interface, SceneSegmentation, VisionError};
use crate::workspace::{clamp_plan, RobotState, SafeRegion};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CutTask {
    Slice,
    PointToPoint,
    Trim,
    Cube,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanSpec {
    pub task: CutTask,
    /// Number of pieces for slicing.
    pub n_pieces: usize,
    /// Trim simplification bound in pixels.
    pub squish_bound: f64,
    pub cube_side_cm: f64,
}

impl PlanSpec {
    pub fn slice(n_pieces: usize) -> Self {
        Self { task: CutTask::Slice, n_pieces, ..Self::default() }
    }

    pub fn trim(squish_bound: f64) -> Self {
        Self { task: CutTask::Trim, squish_bound, ..Self::default() }
    }

    pub fn cube(cube_side_cm: f64) -> Self {
        Self { task: CutTask::Cube, cube_side_cm, ..Self::default() }
    }

    pub fn point_to_point() -> Self {
        Self { task: CutTask::PointToPoint, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        match self.task {
            CutTask::Slice if self.n_pieces < 2 => Err(PlanError::InvalidSpec("n_pieces must be at least 2")),
            CutTask::Trim if !(self.squish_bound >= 0.0) => Err(PlanError::InvalidSpec("squish_bound must be >= 0")),
            CutTask::Cube if !(self.cube_side_cm > 0.0 && self.cube_side_cm.is_finite()) => {
                Err(PlanError::InvalidSpec("cube_side_cm must be positive"))
            }
            _ => Ok(()),
        }
    }
}

impl Default for PlanSpec {
    fn default() -> Self {
        Self { task: CutTask::Slice, n_pieces: 9, squish_bound: 2.0, cube_side_cm: 3.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    /// Narrowest slice the planner will produce, meters.
    pub min_slice_width: f64,
    /// Fraction of a cut's span added beyond the contour at each end.
    pub margin_fraction: f64,
    /// Fat-to-meat distance, pixels, for a contour point to count as interface.
    pub interface_tol_px: f64,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self { min_slice_width: 0.01, margin_fraction: 0.05, interface_tol_px: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CutPlan {
    pub task: CutTask,
    pub polylines: Vec<Vec<Point2>>,
}

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("invalid plan spec: {0}")]
    InvalidSpec(&'static str),
    #[error("infeasible plan: {0}")]
    Infeasible(String),
    #[error("markers coincide, no cut direction")]
    DegenerateCut,
    #[error("need at least 2 points, got {0}")]
    InsufficientPoints(usize),
    #[error("plan has no cuts")]
    EmptyPlan,
    #[error(transparent)]
    Vision(#[from] VisionError),
}

/// `N - 1` vertical cuts splitting the meat into `N` equal-width slices.
///
/// Each cut spans the vertical extent of the meat and, when given, the fat
/// at its `x`, plus the configured margin at both ends.
pub fn plan_slices(
    meat: &[Point2],
    fat: Option<&[Point2]>,
    n_pieces: usize,
    cfg: &PlannerConfig,
) -> Result<CutPlan, PlanError> {
    if n_pieces < 2 {
        return Err(PlanError::InvalidSpec("n_pieces must be at least 2"));
    }
    let b = Bounds::of(meat).ok_or(PlanError::InsufficientPoints(0))?;
    let w = b.width();
    if w < n_pieces as f64 * cfg.min_slice_width {
        return Err(PlanError::Infeasible(format!(
            "meat is {:.4} m wide, {} slices need {:.4} m",
            w,
            n_pieces,
            n_pieces as f64 * cfg.min_slice_width
        )));
    }
    let mut polylines = Vec::with_capacity(n_pieces - 1);
    for k in 1..n_pieces {
        let x = b.min.x + k as f64 * w / n_pieces as f64;
        let mut ys = vertical_crossings(meat, x);
        if let Some(f) = fat {
            ys.extend(vertical_crossings(f, x));
        }
        let (lo, hi) = span(&ys).unwrap_or((b.min.y, b.max.y));
        let m = cfg.margin_fraction * (hi - lo);
        polylines.push(vec![Point2::new(x, lo - m), Point2::new(x, hi + m)]);
    }
    Ok(CutPlan { task: CutTask::Slice, polylines })
}

fn span(values: &[f64]) -> Option<(f64, f64)> {
    let lo = values.iter().copied().reduce(f64::min)?;
    let hi = values.iter().copied().reduce(f64::max)?;
    Some((lo, hi))
}

pub fn plan_point_to_point(a: Point2, b: Point2) -> Result<CutPlan, PlanError> {
    if a == b || !a.is_finite() || !b.is_finite() {
        return Err(PlanError::DegenerateCut);
    }
    Ok(CutPlan { task: CutTask::PointToPoint, polylines: vec![vec![a, b]] })
}

/// Simplifies the interface in pixel space, pushes both ends outward along
/// the end tangents and maps the result to robot coordinates.
pub fn plan_trim(
    interface_px: &[Point2],
    squish_bound: f64,
    calib: &CalibrationParams,
    cfg: &PlannerConfig,
) -> Result<CutPlan, PlanError> {
    let path = trim_path_px(interface_px, squish_bound, cfg)?;
    Ok(CutPlan { task: CutTask::Trim, polylines: vec![path.iter().map(|p| calib.pixel_to_robot(*p)).collect()] })
}

/// Pixel-space trim path: SQUISH-E output with extended end points.
pub fn trim_path_px(interface_px: &[Point2], squish_bound: f64, cfg: &PlannerConfig) -> Result<Vec<Point2>, PlanError> {
    if interface_px.len() < 2 {
        return Err(PlanError::InsufficientPoints(interface_px.len()));
    }
    let mut path = squish_e(interface_px, squish_bound);
    let len = polyline_length(&path);
    if len == 0.0 {
        return Err(PlanError::DegenerateCut);
    }
    let ext = cfg.margin_fraction * len;
    let n = path.len();
    let d0 = path[0] - path[1];
    let d1 = path[n - 1] - path[n - 2];
    path[0] = path[0] + d0 * (ext / d0.norm());
    path[n - 1] = path[n - 1] + d1 * (ext / d1.norm());
    Ok(path)
}

/// Deviation of `p` from the segment `a`-`b`.
///
/// Uses the cross-product form inside the segment so that exactly collinear
/// input produces exactly zero.
pub fn segment_deviation(p: Point2, a: Point2, b: Point2) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let ap = p - a;
    let t = ap.dot(ab);
    if t <= 0.0 {
        p.distance(a)
    } else if t >= len2 {
        p.distance(b)
    } else {
        ap.cross(ab).abs() / len2.sqrt()
    }
}

#[derive(Clone, Copy, PartialEq)]
struct Key(f64, usize);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

/// SQUISH-E(mu) simplification with `lambda = 1`.
///
/// Repeatedly drops the interior point of lowest priority while that
/// priority is at most `bound`. A point's priority is its own deviation from
/// the segment joining its current neighbours plus the largest priority of
/// any neighbour removed next to it, which keeps every removed point within
/// `bound` of the final polyline. The removal order does not depend on
/// `bound`, so a larger bound never keeps more points.
pub fn squish_e(line: &[Point2], bound: f64) -> Vec<Point2> {
    let n = line.len();
    if n < 3 {
        return line.to_vec();
    }
    let mut prev: Vec<usize> = (0..n).map(|i| i.wrapping_sub(1)).collect();
    let mut next: Vec<usize> = (1..=n).collect();
    let mut inherited = vec![0.0f64; n];
    let mut priority = vec![f64::INFINITY; n];
    let mut queue = BTreeSet::new();
    for i in 1..n - 1 {
        priority[i] = segment_deviation(line[i], line[i - 1], line[i + 1]);
        queue.insert(Key(priority[i], i));
    }
    let mut alive = vec![true; n];
    while let Some(&Key(p, i)) = queue.first() {
        if !(p <= bound) {
            break;
        }
        queue.pop_first();
        alive[i] = false;
        let (a, b) = (prev[i], next[i]);
        next[a] = b;
        prev[b] = a;
        for j in [a, b] {
            if j == 0 || j == n - 1 {
                continue;
            }
            queue.remove(&Key(priority[j], j));
            inherited[j] = inherited[j].max(p);
            priority[j] = inherited[j] + segment_deviation(line[j], line[prev[j]], line[next[j]]);
            queue.insert(Key(priority[j], j));
        }
    }
    line.iter().zip(alive).filter_map(|(p, keep)| keep.then_some(*p)).collect()
}

/// Grid of cuts `side` meters apart from the meat's minimal corner: a
/// vertical family parallel to the slicing cuts and a horizontal family
/// orthogonal to it.
pub fn plan_cubes(meat: &[Point2], side: f64, cfg: &PlannerConfig) -> Result<CutPlan, PlanError> {
    if !(side > 0.0 && side.is_finite()) {
        return Err(PlanError::InvalidSpec("cube side must be positive"));
    }
    let b = Bounds::of(meat).ok_or(PlanError::InsufficientPoints(0))?;
    let eps = 1e-9 * side;
    let mut polylines = Vec::new();
    let mut k = 1;
    while b.min.x + k as f64 * side < b.max.x - eps {
        let x = b.min.x + k as f64 * side;
        if let Some((lo, hi)) = span(&vertical_crossings(meat, x)) {
            let m = cfg.margin_fraction * (hi - lo);
            polylines.push(vec![Point2::new(x, lo - m), Point2::new(x, hi + m)]);
        }
        k += 1;
    }
    let mut k = 1;
    while b.min.y + k as f64 * side < b.max.y - eps {
        let y = b.min.y + k as f64 * side;
        if let Some((lo, hi)) = span(&horizontal_crossings(meat, y)) {
            let m = cfg.margin_fraction * (hi - lo);
            polylines.push(vec![Point2::new(lo - m, y), Point2::new(hi + m, y)]);
        }
        k += 1;
    }
    if polylines.is_empty() {
        return Err(PlanError::Infeasible(format!(
            "piece of {:.4} x {:.4} m is smaller than one {:.4} m cube",
            b.width(),
            b.height(),
            side
        )));
    }
    Ok(CutPlan { task: CutTask::Cube, polylines })
}

/// Dispatches on the task using contours from a camera segmentation.
pub fn plan_from_segmentation(
    seg: &SceneSegmentation,
    calib: &CalibrationParams,
    spec: &PlanSpec,
    cfg: &PlannerConfig,
) -> Result<CutPlan, PlanError> {
    spec.validate()?;
    let to_robot = |c: &[Point2]| c.iter().map(|p| calib.pixel_to_robot(*p)).collect::<Vec<_>>();
    match spec.task {
        CutTask::Slice => {
            let meat = to_robot(&seg.meat_contour);
            let fat = seg.fat_contour.as_deref().map(to_robot);
            plan_slices(&meat, fat.as_deref(), spec.n_pieces, cfg)
        }
        CutTask::Trim => {
            let iface = fat_meat_interface(seg, cfg.interface_tol_px)?;
            plan_trim(&iface, spec.squish_bound, calib, cfg)
        }
        CutTask::Cube => plan_cubes(&to_robot(&seg.meat_contour), spec.cube_side_cm / 100.0, cfg),
        CutTask::PointToPoint => match seg.markers.as_slice() {
            [a, b] => plan_point_to_point(calib.pixel_to_robot(*a), calib.pixel_to_robot(*b)),
            m => Err(PlanError::Infeasible(format!("point-to-point needs 2 markers, found {}", m.len()))),
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CutMotionProfile {
    /// Travel height, meters.
    pub z_travel: f64,
    /// Lowest knife height during a plunge, meters.
    pub z_cut_depth: f64,
    /// Duration of one up-and-down plunge, seconds.
    pub period_t: f64,
    /// Distance between plunge points along a cut, meters.
    pub pause_spacing: f64,
    /// Waypoint rate, Hz.
    pub sample_rate: f64,
    /// Planar travel speed, m/s.
    pub travel_speed: f64,
}

impl Default for CutMotionProfile {
    fn default() -> Self {
        Self { z_travel: 0.10, z_cut_depth: 0.005, period_t: 2.0, pause_spacing: 0.02, sample_rate: 100.0, travel_speed: 0.05 }
    }
}

impl CutMotionProfile {
    pub fn validate(&self) -> Result<(), PlanError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if !(self.z_travel > self.z_cut_depth) || !self.z_cut_depth.is_finite() || !self.z_travel.is_finite() {
            return Err(PlanError::InvalidSpec("z_travel must exceed z_cut_depth"));
        }
        if !(positive(self.period_t) && positive(self.pause_spacing) && positive(self.sample_rate) && positive(self.travel_speed)) {
            return Err(PlanError::InvalidSpec("period, spacing, rate and speed must be positive"));
        }
        Ok(())
    }

    /// Knife height `tau` seconds into a plunge.
    pub fn plunge_height(&self, tau: f64) -> f64 {
        self.z_travel - (self.z_travel - self.z_cut_depth) * (1.0 - (2.0 * PI * tau / self.period_t).cos()) / 2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub state: RobotState,
    /// Index of the cut this waypoint belongs to; `None` while travelling
    /// between cuts.
    pub cut: Option<usize>,
}

/// Evenly spaced plunge points along a polyline, endpoints included.
pub fn plunge_points(line: &[Point2], spacing: f64) -> Vec<Point2> {
    let len = polyline_length(line);
    if len == 0.0 {
        return vec![line[0]];
    }
    let intervals = ((len / spacing) - 1e-9).ceil().max(1.0) as usize;
    (0..=intervals).map(|k| point_at(line, len * k as f64 / intervals as f64)).collect()
}

fn point_at(line: &[Point2], s: f64) -> Point2 {
    let mut acc = 0.0;
    for w in line.windows(2) {
        let l = w[0].distance(w[1]);
        if l > 0.0 && acc + l >= s {
            return w[0].lerp(w[1], ((s - acc) / l).clamp(0.0, 1.0));
        }
        acc += l;
    }
    *line.last().expect("non-empty polyline")
}

struct Lifter<'a> {
    profile: &'a CutMotionProfile,
    dt: f64,
    out: Vec<(Point2, f64, Option<usize>)>,
}

impl Lifter<'_> {
    fn push(&mut self, p: Point2, z: f64, cut: Option<usize>) {
        self.out.push((p, z, cut));
    }

    /// Straight travel at `z_travel`; the start point is assumed emitted.
    fn travel(&mut self, from: Point2, to: Point2, cut: Option<usize>) {
        let step = self.profile.travel_speed * self.dt;
        let n = (from.distance(to) / step).ceil() as usize;
        for k in 1..=n {
            self.push(from.lerp(to, k as f64 / n as f64), self.profile.z_travel, cut);
        }
    }

    fn travel_along(&mut self, line: &[Point2], from_s: f64, to_s: f64, cut: usize) {
        // sample each straight piece separately so corners are kept
        let mut acc = 0.0;
        let mut cur = point_at(line, from_s);
        for w in line.windows(2) {
            let l = w[0].distance(w[1]);
            let end = acc + l;
            if end > from_s && acc < to_s && end < to_s {
                self.travel(cur, w[1], Some(cut));
                cur = w[1];
            }
            acc = end;
        }
        self.travel(cur, point_at(line, to_s), Some(cut));
    }

    fn plunge(&mut self, p: Point2, cut: usize) {
        let n = (self.profile.period_t / self.dt).round().max(2.0) as usize;
        for k in 1..=n {
            let tau = self.profile.period_t * k as f64 / n as f64;
            self.push(p, self.profile.plunge_height(tau), Some(cut));
        }
    }
}

/// Lifts a planar plan into timed waypoints.
///
/// Each cut is clamped into the region footprint, then the knife travels at
/// `z_travel` between evenly spaced plunge points and performs one
/// raised-cosine plunge at each. The heading points at the next waypoint
/// with a different planar position. The whole sequence is passed through
/// [`clamp_plan`].
pub fn lift_to_3d(plan: &CutPlan, profile: &CutMotionProfile, region: &SafeRegion) -> Result<Vec<Waypoint>, PlanError> {
    profile.validate()?;
    region.validate().map_err(|_| PlanError::InvalidSpec("invalid safe region"))?;
    if plan.polylines.is_empty() {
        return Err(PlanError::EmptyPlan);
    }
    let dt = 1.0 / profile.sample_rate;
    let mut lifter = Lifter { profile, dt, out: Vec::new() };
    let mut last: Option<Point2> = None;
    for (ci, raw) in plan.polylines.iter().enumerate() {
        if raw.len() < 2 || raw.iter().any(|p| !p.is_finite()) {
            return Err(PlanError::Infeasible(format!("cut {ci} is not a finite polyline")));
        }
        let mut line: Vec<Point2> = Vec::with_capacity(raw.len());
        for p in raw {
            let (x, y) = region.clamp_xy(p.x, p.y);
            let q = Point2::new(x, y);
            if line.last() != Some(&q) {
                line.push(q);
            }
        }
        if line.len() < 2 {
            return Err(PlanError::Infeasible(format!("cut {ci} collapses to a point inside the safe region")));
        }
        let plunges = plunge_points(&line, profile.pause_spacing);
        let len = polyline_length(&line);
        match last {
            None => lifter.push(plunges[0], profile.z_travel, None),
            Some(from) => lifter.travel(from, plunges[0], None),
        }
        let step = len / (plunges.len() - 1) as f64;
        for k in 0..plunges.len() {
            if k > 0 {
                lifter.travel_along(&line, step * (k - 1) as f64, step * k as f64, ci);
            }
            lifter.plunge(plunges[k], ci);
        }
        last = Some(*plunges.last().expect("at least two plunge points"));
    }

    let pts = lifter.out;
    let n = pts.len();
    let mut phi = vec![0.0; n];
    let mut target: Option<Point2> = None;
    let mut next_phi: Option<f64> = None;
    for i in (0..n).rev() {
        let p = pts[i].0;
        if let Some(t) = target.filter(|t| *t != p) {
            next_phi = Some((t.y - p.y).atan2(t.x - p.x));
        }
        phi[i] = next_phi.unwrap_or(f64::NAN);
        if target != Some(p) {
            target = Some(p);
        }
    }
    // trailing waypoints with nothing ahead repeat the last heading
    let fallback = phi.iter().rev().copied().find(|v| !v.is_nan()).unwrap_or(0.0);
    let mut prev = fallback;
    for v in phi.iter_mut() {
        if v.is_nan() {
            *v = prev;
        }
        prev = *v;
    }

    let states: Vec<RobotState> = pts.iter().zip(&phi).map(|((p, z, _), f)| RobotState::new(p.x, p.y, *z, *f)).collect();
    let states = clamp_plan(region, &states).map_err(|_| PlanError::EmptyPlan)?;
    Ok(states
        .into_iter()
        .zip(pts)
        .enumerate()
        .map(|(i, (state, (_, _, cut)))| Waypoint { t: i as f64 * dt, state, cut })
        .collect())
}

/// One waypoint per line, `t x y z phi`, with `# cut i` / `# travel` lines
/// opening each block.
pub fn format_waypoints(waypoints: &[Waypoint]) -> String {
    let mut out = String::new();
    let mut tag: Option<Option<usize>> = None;
    for w in waypoints {
        if tag != Some(w.cut) {
            match w.cut {
                Some(c) => writeln!(out, "# cut {c}").unwrap(),
                None => writeln!(out, "# travel").unwrap(),
            }
            tag = Some(w.cut);
        }
        let s = w.state;
        writeln!(out, "{:.17e} {:.17e} {:.17e} {:.17e} {:.17e}", w.t, s.x, s.y, s.z, s.phi).unwrap();
    }
    out
}

pub fn parse_waypoints(text: &str) -> Result<Vec<Waypoint>, crate::calib::FormatError> {
    use crate::calib::FormatError;
    let mut cut = None;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(c) = line.strip_prefix('#') {
            let c = c.trim();
            if c == "travel" {
                cut = None;
            } else if let Some(idx) = c.strip_prefix("cut") {
                cut = Some(idx.trim().parse().map_err(|_| FormatError::new(i + 1, "bad cut index"))?);
            }
            continue;
        }
        let v: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
        let v = v.map_err(|_| FormatError::new(i + 1, "expected numbers"))?;
        if v.len() != 5 {
            return Err(FormatError::new(i + 1, format!("expected 5 fields, got {}", v.len())));
        }
        out.push(Waypoint { t: v[0], state: RobotState::new(v[1], v[2], v[3], v[4]), cut });
    }
    Ok(out)
}
