//! End-to-end runs: loin to slices, slices to chops, chops trimmed and
//! cubed, every cut planned from a camera image and executed by the
//! simulated arm.
//!
//! Pieces are measured by clipping the ground-truth polygons along the
//! executed knife paths, mapped back to the board through the true camera
//! calibration.

use std::collections::BTreeMap;
use std::fmt::Display;

use carvebot_core::calib::{fit_calibration, CalibrationParams, MarkerPair};
use carvebot_core::control::{simulate_tracking, ControllerConfig, PlantModel, TrackingReport};
use carvebot_core::geometry::{centroid, signed_area, CutSide};
use carvebot_core::planner::{lift_to_3d, plan_from_segmentation, plan_point_to_point, CutMotionProfile, CutPlan, PlanError, PlanSpec, PlannerConfig, Waypoint};
use carvebot_core::vision::{segment_scene, ColorRanges, Scene, SceneSegmentation, SegmentOptions};
use carvebot_core::workspace::SafeRegion;
use carvebot_core::Point2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{CalibrationSetup, HarnessConfig, PipelineConfig};
use crate::metrics::{bounds_of, cut_faces, split_off_fat, total_area, CutSplit, Piece, TrimMode, TrimRecord};
use crate::runlog::{RunLog, StageLog, TrackingSummary};
use crate::scene::{generate_scene, render, Board, FatBand, GeneratedScene, Harmonic, MeatSpec, Outline, SceneTruth};

#[derive(Debug, Error)]
#[error("{stage}: {message}")]
pub struct PipelineError {
    pub stage: String,
    pub message: String,
}

impl PipelineError {
    pub fn new(stage: &str, message: impl Display) -> Self {
        Self { stage: stage.to_string(), message: message.to_string() }
    }
}

fn at<E: Display>(stage: &str) -> impl FnOnce(E) -> PipelineError + '_ {
    move |e| PipelineError::new(stage, e)
}

/// Camera pixels of `n` survey markers spread over the board, with the
/// robot position measured at each.
pub fn survey_markers(setup: &CalibrationSetup, board: &Board, seed: u64) -> Vec<MarkerPair> {
    let truth = setup.truth();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, setup.marker_noise_m).expect("noise sigma is finite");
    let (w, h) = (board.width_px() as f64, board.height_px() as f64);
    (0..setup.n_markers)
        .map(|_| {
            let px = Point2::new(rng.random_range(0.0..w), rng.random_range(0.0..h));
            let r = truth.pixel_to_robot(px);
            let measured = Point2::new(r.x + noise.sample(&mut rng), r.y + noise.sample(&mut rng));
            MarkerPair::new(measured, px)
        })
        .collect()
}

/// Everything fixed about the cell: board, camera, arm and planner settings.
#[derive(Clone, Debug)]
pub struct Rig {
    pub board: Board,
    pub calib_true: CalibrationParams,
    pub calib_fit: CalibrationParams,
    pub region: SafeRegion,
    pub planner: PlannerConfig,
    pub motion: CutMotionProfile,
    pub control: ControllerConfig,
    pub plant: PlantModel,
    pub colors: ColorRanges,
    pub segment: SegmentOptions,
}

/// An executed plan. The knife severs meat at the bottom of each plunge,
/// so an executed cut is the polyline through the deepest executed state of
/// every plunge.
#[derive(Clone, Debug)]
pub struct Execution {
    pub plan: CutPlan,
    pub waypoints: Vec<Waypoint>,
    pub report: TrackingReport,
    /// One executed knife path per planned cut, board centimeters.
    pub cuts_cm: Vec<Vec<Point2>>,
    pub tracking: TrackingSummary,
}

impl Rig {
    pub fn from_config(cfg: &HarnessConfig) -> Result<Rig, PipelineError> {
        cfg.safety.validate().map_err(at("config"))?;
        let pairs = survey_markers(&cfg.calibration, &cfg.board, cfg.seed);
        let calib_fit = fit_calibration(&pairs).map_err(at("calibration"))?;
        Ok(Rig {
            board: cfg.board,
            calib_true: cfg.calibration.truth(),
            calib_fit,
            region: cfg.safety,
            planner: cfg.planner,
            motion: cfg.motion,
            control: cfg.control,
            plant: cfg.plant,
            colors: ColorRanges::default(),
            segment: SegmentOptions::default(),
        })
    }

    /// Where a robot position actually lands on the board.
    pub fn robot_to_cm(&self, p: Point2) -> Point2 {
        self.board.px_to_cm(self.calib_true.robot_to_pixel(p))
    }

    /// Where the robot believes a board point is.
    pub fn cm_to_robot(&self, p: Point2) -> Point2 {
        self.calib_fit.pixel_to_robot(self.board.cm_to_px(p))
    }

    /// Segments `scene` and moves the contours out to the pixel edges.
    pub fn segment(&self, scene: &Scene) -> Result<SceneSegmentation, PipelineError> {
        let seg = segment_scene(scene, &self.colors, &self.segment).map_err(at("segment"))?;
        Ok(edge_segmentation(&seg))
    }

    pub fn plan(&self, seg: &SceneSegmentation, spec: &PlanSpec) -> Result<CutPlan, PlanError> {
        plan_from_segmentation(seg, &self.calib_fit, spec, &self.planner)
    }

    /// Lifts, tracks and maps back one plan. `stream` varies the plant noise
    /// between executions.
    pub fn execute(&self, plan: &CutPlan, stream: u64) -> Result<Execution, PipelineError> {
        let waypoints = lift_to_3d(plan, &self.motion, &self.region).map_err(at("lift"))?;
        let plant = PlantModel { seed: self.plant.seed.wrapping_add(stream), ..self.plant };
        let report = simulate_tracking(&waypoints, &self.control, &plant, &self.region).map_err(at("control"))?;
        let plunges = plunge_groups(&waypoints);
        // deepest executed state per plunge
        let mut deepest: Vec<Option<Point2>> = vec![None; plunges.len()];
        let mut depth = vec![f64::INFINITY; plunges.len()];
        let mut of_waypoint = vec![usize::MAX; waypoints.len()];
        for (g, (_, range)) in plunges.iter().enumerate() {
            for k in range.clone() {
                of_waypoint[k] = g;
            }
        }
        for (s, &k) in report.executed.iter().zip(&report.targets) {
            let g = of_waypoint[k];
            if g != usize::MAX && s.state.z < depth[g] {
                depth[g] = s.state.z;
                deepest[g] = Some(Point2::new(s.state.x, s.state.y));
            }
        }
        let mut cuts_cm: Vec<Vec<Point2>> = vec![Vec::new(); plan.polylines.len()];
        for ((cut, _), p) in plunges.iter().zip(deepest) {
            if let Some(p) = p {
                cuts_cm[*cut].push(self.robot_to_cm(p));
            }
        }
        let tracking = TrackingSummary {
            mean_error_m: report.mean_error,
            max_error_m: report.max_error,
            held_steps: report.held_steps,
            duration_s: report.executed.last().map_or(0.0, |s| s.t),
        };
        Ok(Execution { plan: plan.clone(), waypoints, report, cuts_cm, tracking })
    }
}

/// Runs of cut waypoints that share one planar position, in order, with the
/// cut they belong to.
fn plunge_groups(waypoints: &[Waypoint]) -> Vec<(usize, std::ops::Range<usize>)> {
    let mut out = Vec::new();
    let mut k = 0;
    while k < waypoints.len() {
        let Some(c) = waypoints[k].cut else {
            k += 1;
            continue;
        };
        let (x, y) = (waypoints[k].state.x, waypoints[k].state.y);
        let mut j = k + 1;
        while j < waypoints.len() && waypoints[j].cut == Some(c) && waypoints[j].state.x == x && waypoints[j].state.y == y {
            j += 1;
        }
        if j - k > 1 {
            out.push((c, k..j));
        }
        k = j;
    }
    out
}

/// Pushes a traced contour, which runs through boundary pixel centers, out
/// by `d` pixels so it follows the pixel edges instead.
pub fn edge_contour(contour: &[Point2], d: f64) -> Vec<Point2> {
    let mut pts: Vec<Point2> = Vec::with_capacity(contour.len());
    for p in contour {
        if pts.last() != Some(p) {
            pts.push(*p);
        }
    }
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    if pts.len() == 1 {
        let c = pts[0];
        return vec![
            Point2::new(c.x - d, c.y - d),
            Point2::new(c.x + d, c.y - d),
            Point2::new(c.x + d, c.y + d),
            Point2::new(c.x - d, c.y + d),
        ];
    }
    let orient = signed_area(&pts).signum();
    if pts.len() < 3 || orient == 0.0 {
        return pts;
    }
    let n = pts.len();
    let unit = |v: Point2| v * (1.0 / v.norm());
    let outward = |e: Point2| Point2::new(e.y, -e.x) * orient;
    (0..n)
        .map(|i| {
            let (prev, cur, next) = (pts[(i + n - 1) % n], pts[i], pts[(i + 1) % n]);
            let e1 = unit(cur - prev);
            let e2 = unit(next - cur);
            let (n1, n2) = (outward(e1), outward(e2));
            let c = 1.0 + n1.dot(n2);
            if c < 1e-6 {
                // tip of a one-pixel spur
                cur + e1 * d
            } else {
                cur + (n1 + n2) * (d / c)
            }
        })
        .collect()
}

pub fn edge_segmentation(seg: &SceneSegmentation) -> SceneSegmentation {
    SceneSegmentation {
        meat_contour: edge_contour(&seg.meat_contour, 0.5),
        fat_contour: seg.fat_contour.as_deref().map(|c| edge_contour(c, 0.5)),
        ..seg.clone()
    }
}

/// Meat and fat faces of one piece.
pub type FaceGroup = (Vec<Vec<Point2>>, Vec<Vec<Point2>>);

/// Groups faces into pieces by which side of every cut they lie on. Pieces
/// come back ordered by centroid, `x` first.
pub fn group_faces(meat: Vec<Vec<Point2>>, fat: Vec<Vec<Point2>>, cuts: &[Vec<Point2>]) -> Vec<FaceGroup> {
    let extent = bounds_of(&meat)
        .into_iter()
        .chain(bounds_of(&fat))
        .chain(bounds_of(cuts))
        .reduce(|a, b| a.union(b));
    let Some(extent) = extent else { return Vec::new() };
    let sides: Vec<CutSide> = cuts.iter().filter_map(|c| CutSide::new(c, extent)).collect();
    let signature = |f: &Vec<Point2>| {
        let p = carvebot_core::geometry::interior_point(f);
        sides.iter().map(|s| s.side(p) == carvebot_core::geometry::Side::Left).collect::<Vec<bool>>()
    };
    let mut groups: BTreeMap<Vec<bool>, FaceGroup> = BTreeMap::new();
    for f in meat {
        groups.entry(signature(&f)).or_default().0.push(f);
    }
    for f in fat {
        groups.entry(signature(&f)).or_default().1.push(f);
    }
    let mut out: Vec<(Point2, FaceGroup)> = groups
        .into_values()
        .map(|g| {
            let mut a = 0.0;
            let mut c = Point2::new(0.0, 0.0);
            for f in g.0.iter().chain(&g.1) {
                let fa = carvebot_core::geometry::area(f);
                c = c + centroid(f) * fa;
                a += fa;
            }
            (if a > 0.0 { c * (1.0 / a) } else { c }, g)
        })
        .collect();
    out.sort_by(|a, b| a.0.x.total_cmp(&b.0.x).then(a.0.y.total_cmp(&b.0.y)));
    out.into_iter().map(|(_, g)| g).collect()
}

fn stage_log(stage: &str, chop: Option<usize>, exec: &Execution) -> StageLog {
    StageLog {
        stage: stage.to_string(),
        chop,
        plan: exec.plan.clone(),
        executed_cm: exec.cuts_cm.clone(),
        tracking: Some(exec.tracking),
    }
}

fn mix(a: u64, b: u64) -> u64 {
    a.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(b)
}

/// Chop face cut from a slice: an ellipse as wide as the slice is long and
/// as tall as the loin, with the slice's fat laid over its top edge.
pub fn chop_spec(slice: &Piece, loin: &MeatSpec, board: &Board, cfg: &PipelineConfig, seed: u64) -> MeatSpec {
    let t = slice.thickness_cm.max(1e-6);
    let f = slice.fat_area_cm2 / t;
    let band = (f >= cfg.min_fat_thickness_cm).then(|| FatBand { start_deg: 230.0, end_deg: 310.0, thickness_cm: vec![0.6 * f, f, f, 0.6 * f] });
    let fat_top = band.as_ref().map_or(0.0, |b| b.thickness_cm[1]);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let amp = cfg.chop_harmonic_amplitude;
    let harmonics = if amp > 0.0 {
        (2..=3).map(|k| Harmonic { order: k, amplitude: rng.random_range(-amp..amp), phase: rng.random_range(0.0..std::f64::consts::TAU) }).collect()
    } else {
        Vec::new()
    };
    MeatSpec {
        outline: Outline::Blob {
            semi_axes_cm: (((slice.length_cm - fat_top) / 2.0).max(0.5), loin.thickness_cm / 2.0),
            harmonics,
        },
        center_cm: board.center(),
        fat_band: band,
        thickness_cm: t,
        density: loin.density,
        seed,
    }
}

/// Proctor markers: the ends of the true interface, each pushed `offset`
/// outward along the chord between them.
pub fn proctor_markers(truth: &SceneTruth, offset_cm: f64) -> Option<(Point2, Point2)> {
    let iface = truth.interface.as_ref()?;
    let (a, b) = (*iface.first()?, *iface.last()?);
    let chord = b - a;
    let len = chord.norm();
    if len == 0.0 {
        return None;
    }
    let u = chord * (1.0 / len);
    Some((a - u * offset_cm, b + u * offset_cm))
}

/// Result of one de-fatting cut.
#[derive(Clone, Debug)]
pub struct TrimOutcome {
    pub record: TrimRecord,
    pub split: CutSplit,
    pub stage: Option<StageLog>,
}

/// De-fats the chop in `gen` with the given mode.
pub fn trim_chop(
    rig: &Rig,
    chop: usize,
    spec: &MeatSpec,
    gen: &GeneratedScene,
    mode: TrimMode,
    cfg: &PipelineConfig,
    stream: u64,
) -> Result<TrimOutcome, PipelineError> {
    let meat = vec![gen.truth.meat.clone()];
    let fat: Vec<Vec<Point2>> = gen.truth.fat.iter().cloned().collect();
    let iface = gen.truth.interface.clone().unwrap_or_default();
    let untouched = |mode| TrimOutcome {
        record: TrimRecord::from_split(
            chop,
            mode,
            &CutSplit { kept_meat: meat.clone(), removed_meat: Vec::new(), kept_fat: fat.clone(), removed_fat: Vec::new() },
            &iface,
            spec.thickness_cm,
            spec.density,
        ),
        split: CutSplit { kept_meat: meat.clone(), removed_meat: Vec::new(), kept_fat: fat.clone(), removed_fat: Vec::new() },
        stage: None,
    };
    if fat.is_empty() || mode == TrimMode::Skip {
        return Ok(untouched(TrimMode::Skip));
    }
    let plan = match mode {
        TrimMode::Trim => {
            let seg = rig.segment(&gen.scene)?;
            match rig.plan(&seg, &PlanSpec::trim(cfg.squish_bound_px)) {
                Ok(p) => p,
                Err(e) => {
                    log::warn!("chop {chop}: no trim path ({e}), leaving fat on");
                    return Ok(untouched(TrimMode::Skip));
                }
            }
        }
        TrimMode::PointToPoint => {
            let (a, b) = proctor_markers(&gen.truth, cfg.proctor_offset_cm).ok_or_else(|| PipelineError::new("proctor", "no interface"))?;
            plan_point_to_point(rig.cm_to_robot(a), rig.cm_to_robot(b)).map_err(at("plan"))?
        }
        TrimMode::Skip => unreachable!(),
    };
    let exec = rig.execute(&plan, stream)?;
    let split = split_off_fat(&meat, &fat, &exec.cuts_cm[0]);
    let record = TrimRecord::from_split(chop, mode, &split, &iface, spec.thickness_cm, spec.density);
    Ok(TrimOutcome { record, split, stage: Some(stage_log("trim", Some(chop), &exec)) })
}

/// Cubes what is left of a chop. Pieces too small to cube come back whole.
pub fn cube_chop(
    rig: &Rig,
    chop: usize,
    spec: &MeatSpec,
    split: &CutSplit,
    cfg: &PipelineConfig,
    stream: u64,
) -> Result<(Vec<Piece>, Option<StageLog>), PipelineError> {
    let whole = || vec![Piece::from_chop(chop, split.kept_meat.clone(), split.kept_fat.clone(), spec.thickness_cm, spec.density)];
    if split.kept_meat.is_empty() {
        return Ok((Vec::new(), None));
    }
    let scene = render(&rig.board, &split.kept_meat, &split.kept_fat, spec.seed.wrapping_add(1)).map_err(at("render"))?;
    let seg = rig.segment(&scene)?;
    let plan = match rig.plan(&seg, &PlanSpec::cube(cfg.cube_side_cm)) {
        Ok(p) => p,
        Err(PlanError::Infeasible(_)) => return Ok((whole(), None)),
        Err(e) => return Err(PipelineError::new("plan", e)),
    };
    let exec = rig.execute(&plan, stream)?;
    let meat = cut_faces(&split.kept_meat, &exec.cuts_cm);
    let fat = cut_faces(&split.kept_fat, &exec.cuts_cm);
    let pieces = group_faces(meat, fat, &exec.cuts_cm)
        .into_iter()
        .map(|(m, f)| Piece::from_chop(chop, m, f, spec.thickness_cm, spec.density))
        .collect();
    Ok((pieces, Some(stage_log("cube", Some(chop), &exec))))
}

/// Loin slices from one executed slicing plan.
pub fn slice_loin(rig: &Rig, loin: &MeatSpec, gen: &GeneratedScene, cfg: &PipelineConfig, stream: u64) -> Result<(Vec<Piece>, StageLog), PipelineError> {
    let seg = rig.segment(&gen.scene)?;
    let plan = rig.plan(&seg, &PlanSpec::slice(cfg.n_slices)).map_err(at("plan"))?;
    let exec = rig.execute(&plan, stream)?;
    let meat = cut_faces(std::slice::from_ref(&gen.truth.meat), &exec.cuts_cm);
    let fat = cut_faces(&gen.truth.fat.iter().cloned().collect::<Vec<_>>(), &exec.cuts_cm);
    let slices = group_faces(meat, fat, &exec.cuts_cm)
        .into_iter()
        .map(|(m, f)| Piece::slice(m, f, loin.thickness_cm, loin.density))
        .collect();
    Ok((slices, stage_log("slice", None, &exec)))
}

/// A finished run and the images worth keeping with it.
#[derive(Clone, Debug)]
pub struct PipelineOutput {
    pub log: RunLog,
    pub snapshots: Vec<(String, Scene)>,
}

/// Slices the configured loin, turns every slice into a chop, de-fats and
/// cubes each chop.
pub fn run_pipeline(cfg: &HarnessConfig) -> Result<PipelineOutput, PipelineError> {
    let rig = Rig::from_config(cfg)?;
    let pc = &cfg.pipeline;
    let mut log = RunLog::new("pipeline", cfg.seed, cfg.to_toml().map_err(at("config"))?, rig.calib_fit, rig.calib_true);
    let loin = generate_scene(&cfg.loin, &cfg.board).map_err(at("scene"))?;
    log.parent_area_cm2 = loin.truth.meat_area_cm2() + loin.truth.fat_area_cm2();
    let mut snapshots = vec![("loin".to_string(), loin.scene.clone())];

    let mut stream = 0;
    let (slices, stage) = slice_loin(&rig, &cfg.loin, &loin, pc, stream)?;
    log.stages.push(stage);
    log::info!("{} slices", slices.len());

    for (i, slice) in slices.iter().enumerate() {
        let spec = chop_spec(slice, &cfg.loin, &cfg.board, pc, mix(cfg.seed, i as u64 + 1));
        let gen = generate_scene(&spec, &cfg.board).map_err(|e| PipelineError::new("chop", format!("slice {i}: {e}")))?;
        log.chops.push(Piece::from_chop(
            i,
            vec![gen.truth.meat.clone()],
            gen.truth.fat.iter().cloned().collect(),
            spec.thickness_cm,
            spec.density,
        ));
        snapshots.push((format!("chop-{i:02}"), gen.scene.clone()));

        stream += 1;
        let trim = trim_chop(&rig, i, &spec, &gen, pc.trim_mode, pc, stream)?;
        log.stages.extend(trim.stage);
        if trim.record.mode != TrimMode::Skip {
            log.trims.push(trim.record);
        }
        stream += 1;
        let (cubes, stage) = cube_chop(&rig, i, &spec, &trim.split, pc, stream)?;
        log.stages.extend(stage);
        log.cubes.extend(cubes);
    }
    log.slices = slices;
    Ok(PipelineOutput { log, snapshots })
}

/// Largest relative area mismatch between each parent and its pieces.
pub fn conservation_error(log: &RunLog) -> f64 {
    let rel = |parts: f64, whole: f64| if whole > 0.0 { (parts - whole).abs() / whole } else { parts.abs() };
    let mut worst = rel(log.slices.iter().map(|p| p.area_cm2).sum(), log.parent_area_cm2);
    for (i, chop) in log.chops.iter().enumerate() {
        let removed: f64 = log.trims.iter().filter(|t| t.chop == i).map(|t| t.fat_removed_cm2 + t.meat_removed_cm2).sum();
        let cubes: f64 = log.cubes.iter().filter(|p| p.chop == Some(i)).map(|p| p.area_cm2).sum();
        worst = worst.max(rel(cubes + removed, chop.area_cm2));
    }
    worst
}

/// Meat and fat area of a set of faces.
pub fn faces_area(g: &FaceGroup) -> (f64, f64) {
    (total_area(&g.0), total_area(&g.1))
}

/// Summary of one trim-versus-straight comparison on a chop.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrimComparison {
    pub seed: u64,
    pub trim: TrimRecord,
    pub point_to_point: TrimRecord,
}

/// Runs both de-fatting modes on the same chop scene.
pub fn compare_trim(rig: &Rig, spec: &MeatSpec, cfg: &PipelineConfig) -> Result<TrimComparison, PipelineError> {
    let gen = generate_scene(spec, &rig.board).map_err(at("scene"))?;
    let trim = trim_chop(rig, 0, spec, &gen, TrimMode::Trim, cfg, 1)?;
    let ptp = trim_chop(rig, 0, spec, &gen, TrimMode::PointToPoint, cfg, 2)?;
    Ok(TrimComparison { seed: spec.seed, trim: trim.record, point_to_point: ptp.record })
}
