//! Structured run records and the append-only store they live in.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use carvebot_core::calib::CalibrationParams;
use carvebot_core::planner::CutPlan;
use carvebot_core::vision::Scene;
use carvebot_core::Point2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::{Piece, TrimRecord};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingSummary {
    pub mean_error_m: f64,
    pub max_error_m: f64,
    pub held_steps: usize,
    pub duration_s: f64,
}

/// One executed plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageLog {
    pub stage: String,
    pub chop: Option<usize>,
    /// Planned cuts in robot coordinates.
    pub plan: CutPlan,
    /// Executed knife paths mapped back to board centimeters.
    pub executed_cm: Vec<Vec<Point2>>,
    pub tracking: Option<TrackingSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunLog {
    pub run_id: String,
    pub created_unix_ms: u64,
    pub seed: u64,
    pub kind: String,
    /// Configuration in effect, as TOML.
    pub config: String,
    pub calibration_fitted: CalibrationParams,
    pub calibration_true: CalibrationParams,
    /// Meat plus fat area of the starting piece, cm^2.
    pub parent_area_cm2: f64,
    pub stages: Vec<StageLog>,
    pub slices: Vec<Piece>,
    /// Chop faces derived from each slice, board centimeters.
    pub chops: Vec<Piece>,
    pub trims: Vec<TrimRecord>,
    pub cubes: Vec<Piece>,
    /// Snapshot file names inside the run directory.
    pub snapshots: Vec<String>,
}

impl RunLog {
    pub fn new(kind: &str, seed: u64, config: String, fitted: CalibrationParams, truth: CalibrationParams) -> Self {
        RunLog {
            run_id: String::new(),
            created_unix_ms: now_ms(),
            seed,
            kind: kind.to_string(),
            config,
            calibration_fitted: fitted,
            calibration_true: truth,
            parent_area_cm2: 0.0,
            stages: Vec::new(),
            slices: Vec::new(),
            chops: Vec::new(),
            trims: Vec::new(),
            cubes: Vec::new(),
            snapshots: Vec::new(),
        }
    }
}

fn now_ms() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("run {0} not found")]
    NotFound(String),
    #[error("invalid run id {0:?}")]
    InvalidId(String),
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Directory of `run-NNNNNN/` folders, each holding `runlog.json` and the
/// PPM snapshots of the run. Existing runs are never rewritten.
#[derive(Clone, Debug)]
pub struct RunStore {
    root: PathBuf,
}

impl RunStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(&root)?;
        Ok(RunStore { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn next_index(&self) -> Result<u64, StoreError> {
        let mut max = 0;
        for entry in fs::read_dir(&self.root)? {
            let name = entry?.file_name();
            if let Some(n) = name.to_str().and_then(|s| s.strip_prefix("run-")).and_then(|s| s.parse::<u64>().ok()) {
                max = max.max(n);
            }
        }
        Ok(max + 1)
    }

    /// Stores `log` under a fresh id, which is written into the log.
    pub fn save(&self, log: &mut RunLog, snapshots: &[(&str, &Scene)]) -> Result<String, StoreError> {
        let mut idx = self.next_index()?;
        let (id, dir) = loop {
            let id = format!("run-{idx:06}");
            let dir = self.root.join(&id);
            // create_dir fails if another writer took the id first
            match fs::create_dir(&dir) {
                Ok(()) => break (id, dir),
                Err(e) if e.kind() == io::ErrorKind::AlreadyExists => idx += 1,
                Err(e) => return Err(e.into()),
            }
        };
        log.run_id = id.clone();
        log.snapshots.clear();
        for (name, scene) in snapshots {
            let file = format!("{name}.ppm");
            fs::write(dir.join(&file), scene.to_ppm_bytes())?;
            log.snapshots.push(file);
        }
        let tmp = dir.join("runlog.json.tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(log)?)?;
        fs::rename(tmp, dir.join("runlog.json"))?;
        Ok(id)
    }

    pub fn load(&self, id: &str) -> Result<RunLog, StoreError> {
        let valid = id.strip_prefix("run-").is_some_and(|n| !n.is_empty() && n.bytes().all(|b| b.is_ascii_digit()));
        if !valid {
            return Err(StoreError::InvalidId(id.to_string()));
        }
        match fs::read(self.root.join(id).join("runlog.json")) {
            Ok(bytes) => Ok(serde_json::from_slice(&bytes)?),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(StoreError::NotFound(id.to_string())),
            Err(e) => Err(e.into()),
        }
    }

    pub fn list(&self) -> Result<Vec<String>, StoreError> {
        let mut ids: Vec<String> = fs::read_dir(&self.root)?
            .filter_map(|e| e.ok()?.file_name().into_string().ok())
            .filter(|n| n.starts_with("run-") && self.root.join(n).join("runlog.json").exists())
            .collect();
        ids.sort();
        Ok(ids)
    }
}
