//! HTTP session around one chop on the board: place two markers, preview the
//! straight cut between them, execute it, inspect stored runs.
//!
//! One actor thread owns the session and applies every change in arrival
//! order. Handlers read the latest published [`SceneView`] without touching
//! the session.

use std::sync::Arc;
use std::thread;

use axum::extract::{Path as AxPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::Engine;
use carvebot_core::planner::{plan_point_to_point, CutPlan};
use carvebot_core::vision::{segment_scene, Scene, SceneSegmentation};
use carvebot_core::Point2;
use serde::{Deserialize, Serialize};
use tokio::sync::{mpsc, oneshot, watch};

use crate::config::HarnessConfig;
use crate::metrics::{split_off_fat, total_area, TrimMode, TrimRecord};
use crate::pipeline::{Execution, Rig};
use crate::runlog::{RunLog, RunStore, StageLog, StoreError};
use crate::scene::{generate_scene, render, Board};

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(serde_json::json!({ "error": self.message }))).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        let status = match e {
            StoreError::NotFound(_) => StatusCode::NOT_FOUND,
            StoreError::InvalidId(_) => StatusCode::BAD_REQUEST,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        ApiError::new(status, e.to_string())
    }
}

/// Everything the client needs to draw the board.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneView {
    /// Bumped on every change to scene, markers or plan.
    pub version: u64,
    pub width: u32,
    pub height: u32,
    pub board: Board,
    pub ppm_base64: String,
    /// Contours in pixel coordinates; `None` once no meat is left.
    pub segmentation: Option<SceneSegmentation>,
    /// Board centimeters.
    pub markers: Vec<[f64; 2]>,
    pub has_plan: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarkersRequest {
    /// Board centimeters.
    pub markers: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanView {
    pub markers: Vec<[f64; 2]>,
    /// Planned cut in robot coordinates, meters.
    pub polyline_robot: Vec<[f64; 2]>,
    /// The same cut on the board as the camera sees it, centimeters.
    pub polyline_cm: Vec<[f64; 2]>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub phi: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExecuteView {
    pub run_id: String,
    /// Executed arm states at 100 Hz, robot coordinates.
    pub trajectory: Vec<TrajectoryPoint>,
    /// Severed path on the board, centimeters.
    pub cut_cm: Vec<[f64; 2]>,
    pub trim: TrimRecord,
    pub scene: SceneView,
}

const TRAJECTORY_HZ: f64 = 100.0;

fn xy(p: Point2) -> [f64; 2] {
    [p.x, p.y]
}

struct Session {
    cfg: HarnessConfig,
    rig: Rig,
    store: RunStore,
    meat: Vec<Vec<Point2>>,
    fat: Vec<Vec<Point2>>,
    interface: Vec<Point2>,
    scene: Scene,
    seg: Option<SceneSegmentation>,
    markers: Option<[Point2; 2]>,
    plan: Option<(CutPlan, PlanView)>,
    version: u64,
    cuts: u64,
}

impl Session {
    fn new(cfg: HarnessConfig, store: RunStore) -> Result<Self, String> {
        let rig = Rig::from_config(&cfg).map_err(|e| e.to_string())?;
        let gen = generate_scene(&cfg.service.chop, &cfg.board).map_err(|e| e.to_string())?;
        let seg = segment_scene(&gen.scene, &rig.colors, &rig.segment).ok();
        Ok(Session {
            rig,
            store,
            meat: vec![gen.truth.meat.clone()],
            fat: gen.truth.fat.iter().cloned().collect(),
            interface: gen.truth.interface.clone().unwrap_or_default(),
            scene: gen.scene,
            seg,
            markers: None,
            plan: None,
            version: 1,
            cuts: 0,
            cfg,
        })
    }

    fn view(&self) -> SceneView {
        SceneView {
            version: self.version,
            width: self.scene.width,
            height: self.scene.height,
            board: self.rig.board,
            ppm_base64: base64::engine::general_purpose::STANDARD.encode(self.scene.to_ppm_bytes()),
            segmentation: self.seg.clone(),
            markers: self.markers.iter().flatten().map(|p| xy(*p)).collect(),
            has_plan: self.plan.is_some(),
        }
    }

    fn set_markers(&mut self, req: MarkersRequest) -> Result<SceneView, ApiError> {
        let unprocessable = |m: &str| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, m);
        let [a, b] = req.markers.as_slice() else {
            return Err(unprocessable(&format!("need exactly 2 markers, got {}", req.markers.len())));
        };
        let (a, b) = (Point2::new(a[0], a[1]), Point2::new(b[0], b[1]));
        if !(a.is_finite() && b.is_finite()) {
            return Err(unprocessable("marker coordinates must be finite"));
        }
        if !(self.rig.board.contains_cm(a) && self.rig.board.contains_cm(b)) {
            return Err(unprocessable("markers must lie on the board"));
        }
        if a.distance(b) < 1e-6 {
            return Err(unprocessable("markers coincide"));
        }
        self.markers = Some([a, b]);
        self.plan = None;
        self.version += 1;
        Ok(self.view())
    }

    fn plan(&mut self) -> Result<PlanView, ApiError> {
        let Some([a, b]) = self.markers else {
            return Err(ApiError::new(StatusCode::CONFLICT, "place two markers first"));
        };
        if let Some((_, view)) = &self.plan {
            return Ok(view.clone());
        }
        let plan = plan_point_to_point(self.rig.cm_to_robot(a), self.rig.cm_to_robot(b))
            .map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        let line = &plan.polylines[0];
        let view = PlanView {
            markers: vec![xy(a), xy(b)],
            polyline_robot: line.iter().map(|p| xy(*p)).collect(),
            polyline_cm: line.iter().map(|p| xy(self.rig.board.px_to_cm(self.rig.calib_fit.robot_to_pixel(*p)))).collect(),
        };
        self.plan = Some((plan, view.clone()));
        self.version += 1;
        Ok(view)
    }

    fn execute(&mut self) -> Result<ExecuteView, ApiError> {
        let Some((plan, _)) = self.plan.clone() else {
            return Err(ApiError::new(StatusCode::CONFLICT, "preview a plan first"));
        };
        let internal = |e: String| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e);
        self.cuts += 1;
        let exec: Execution = self.rig.execute(&plan, self.cuts).map_err(|e| internal(e.to_string()))?;
        let cut = exec.cuts_cm[0].clone();
        let split = split_off_fat(&self.meat, &self.fat, &cut);
        let spec = &self.cfg.service.chop;
        let record = TrimRecord::from_split(0, TrimMode::PointToPoint, &split, &self.interface, spec.thickness_cm, spec.density);

        let before = self.scene.clone();
        let mut log = RunLog::new("session", self.cfg.seed, self.cfg.to_toml().map_err(|e| internal(e.to_string()))?, self.rig.calib_fit, self.rig.calib_true);
        log.parent_area_cm2 = total_area(&self.meat) + total_area(&self.fat);
        log.stages.push(StageLog { stage: "point_to_point".into(), chop: Some(0), plan, executed_cm: exec.cuts_cm.clone(), tracking: Some(exec.tracking) });
        log.trims.push(record.clone());

        self.meat = split.kept_meat;
        self.fat = split.kept_fat;
        self.scene = render(&self.rig.board, &self.meat, &self.fat, spec.seed.wrapping_add(self.cuts)).map_err(|e| internal(e.to_string()))?;
        self.seg = segment_scene(&self.scene, &self.rig.colors, &self.rig.segment).ok();
        self.markers = None;
        self.plan = None;
        self.version += 1;

        let run_id = self.store.save(&mut log, &[("before", &before), ("after", &self.scene)])?;
        let stride = (self.rig.control.rate / TRAJECTORY_HZ).round().max(1.0) as usize;
        let states = &exec.report.executed;
        let mut trajectory: Vec<TrajectoryPoint> = states
            .iter()
            .step_by(stride)
            .chain(states.last().filter(|_| (states.len() - 1) % stride != 0))
            .map(|s| TrajectoryPoint { t: s.t, x: s.state.x, y: s.state.y, z: s.state.z, phi: s.state.phi })
            .collect();
        trajectory.dedup_by(|a, b| a.t == b.t);
        Ok(ExecuteView { run_id, trajectory, cut_cm: cut.iter().map(|p| xy(*p)).collect(), trim: record, scene: self.view() })
    }
}

enum Command {
    Markers(MarkersRequest, oneshot::Sender<Result<SceneView, ApiError>>),
    Plan(oneshot::Sender<Result<PlanView, ApiError>>),
    Execute(oneshot::Sender<Result<ExecuteView, ApiError>>),
}

#[derive(Clone)]
struct AppState {
    tx: mpsc::Sender<Command>,
    view: watch::Receiver<Arc<SceneView>>,
    store: RunStore,
}

fn run_actor(mut session: Session, mut rx: mpsc::Receiver<Command>, publish: watch::Sender<Arc<SceneView>>) {
    while let Some(cmd) = rx.blocking_recv() {
        match cmd {
            Command::Markers(req, reply) => {
                let _ = reply.send(session.set_markers(req));
            }
            Command::Plan(reply) => {
                let _ = reply.send(session.plan());
            }
            Command::Execute(reply) => {
                let _ = reply.send(session.execute());
            }
        }
        if publish.borrow().version != session.version {
            publish.send_replace(Arc::new(session.view()));
        }
    }
}

/// Builds the router and starts the session actor.
pub fn router(cfg: &HarnessConfig) -> Result<Router, String> {
    let store = RunStore::open(&cfg.service.runs_dir).map_err(|e| e.to_string())?;
    let session = Session::new(cfg.clone(), store.clone())?;
    let (publish, view) = watch::channel(Arc::new(session.view()));
    let (tx, rx) = mpsc::channel(32);
    thread::Builder::new()
        .name("session".into())
        .spawn(move || run_actor(session, rx, publish))
        .map_err(|e| e.to_string())?;
    let state = AppState { tx, view, store };
    Ok(Router::new()
        .route("/scene", get(get_scene))
        .route("/markers", post(post_markers))
        .route("/plan", get(get_plan))
        .route("/execute", post(post_execute))
        .route("/runs/{id}", get(get_run))
        .with_state(state))
}

async fn ask<T>(state: &AppState, make: impl FnOnce(oneshot::Sender<Result<T, ApiError>>) -> Command) -> Result<T, ApiError> {
    let gone = || ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "session stopped");
    let (reply, rx) = oneshot::channel();
    state.tx.send(make(reply)).await.map_err(|_| gone())?;
    rx.await.map_err(|_| gone())?
}

async fn get_scene(State(state): State<AppState>) -> Json<SceneView> {
    let view = state.view.borrow().clone();
    Json((*view).clone())
}

async fn post_markers(State(state): State<AppState>, Json(req): Json<MarkersRequest>) -> Result<Json<SceneView>, ApiError> {
    ask(&state, |r| Command::Markers(req, r)).await.map(Json)
}

async fn get_plan(State(state): State<AppState>) -> Result<Json<PlanView>, ApiError> {
    ask(&state, Command::Plan).await.map(Json)
}

async fn post_execute(State(state): State<AppState>) -> Result<Json<ExecuteView>, ApiError> {
    ask(&state, Command::Execute).await.map(Json)
}

async fn get_run(State(state): State<AppState>, AxPath(id): AxPath<String>) -> Result<Json<RunLog>, ApiError> {
    let store = state.store.clone();
    let log = tokio::task::spawn_blocking(move || store.load(&id))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok(Json(log))
}

pub async fn serve(cfg: &HarnessConfig) -> anyhow::Result<()> {
    let app = router(cfg).map_err(anyhow::Error::msg)?;
    let listener = tokio::net::TcpListener::bind(&cfg.service.addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, app).await?;
    Ok(())
}
