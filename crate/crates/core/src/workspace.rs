//! Safe operating region for the knife.
//!
//! Two checks use the same box: planned waypoints are clamped into it, and
//! every executed step is gated so that a step ending outside is dropped.
//! Bounds are inclusive on all six faces.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafeRegion {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub z_min: f64,
    pub z_max: f64,
}

/// Gripper state: position in meters and knife heading in radians.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub phi: f64,
}

impl RobotState {
    pub const fn new(x: f64, y: f64, z: f64, phi: f64) -> Self {
        Self { x, y, z, phi }
    }

    pub fn position(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite() && self.phi.is_finite()
    }

    /// Euclidean distance between positions; heading is ignored.
    pub fn position_distance(&self, other: &RobotState) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        (dx * dx + dy * dy + dz * dz).sqrt()
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum WorkspaceError {
    #[error("invalid region: {0}")]
    InvalidRegion(&'static str),
    #[error("trajectory is empty")]
    EmptyTrajectory,
    #[error("current state ({x:.4}, {y:.4}, {z:.4}) is outside the safe region")]
    SafetyViolation { x: f64, y: f64, z: f64 },
}

/// Outcome of the execution-time check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateDecision {
    Execute(RobotState),
    Hold(RobotState),
}

impl GateDecision {
    pub fn state(&self) -> RobotState {
        match *self {
            GateDecision::Execute(s) | GateDecision::Hold(s) => s,
        }
    }

    pub fn is_hold(&self) -> bool {
        matches!(self, GateDecision::Hold(_))
    }
}

impl SafeRegion {
    pub fn new(
        x: (f64, f64),
        y: (f64, f64),
        z: (f64, f64),
    ) -> Result<Self, WorkspaceError> {
        let r = Self { x_min: x.0, x_max: x.1, y_min: y.0, y_max: y.1, z_min: z.0, z_max: z.1 };
        r.validate()?;
        Ok(r)
    }

    pub fn validate(&self) -> Result<(), WorkspaceError> {
        let all = [self.x_min, self.x_max, self.y_min, self.y_max, self.z_min, self.z_max];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(WorkspaceError::InvalidRegion("non-finite bound"));
        }
        if !(self.x_min < self.x_max && self.y_min < self.y_max && self.z_min < self.z_max) {
            return Err(WorkspaceError::InvalidRegion("min must be below max on every axis"));
        }
        Ok(())
    }

    pub fn contains(&self, p: [f64; 3]) -> bool {
        (self.x_min..=self.x_max).contains(&p[0])
            && (self.y_min..=self.y_max).contains(&p[1])
            && (self.z_min..=self.z_max).contains(&p[2])
    }

    pub fn contains_state(&self, s: &RobotState) -> bool {
        self.contains(s.position())
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    pub fn clamp_xy(&self, x: f64, y: f64) -> (f64, f64) {
        (x.clamp(self.x_min, self.x_max), y.clamp(self.y_min, self.y_max))
    }
}

/// Clamps each coordinate independently into the region.
pub fn clamp_waypoint(region: &SafeRegion, p: [f64; 3]) -> [f64; 3] {
    [
        p[0].clamp(region.x_min, region.x_max),
        p[1].clamp(region.y_min, region.y_max),
        p[2].clamp(region.z_min, region.z_max),
    ]
}

/// Element-wise [`clamp_waypoint`]; heading is untouched.
pub fn clamp_plan(region: &SafeRegion, trajectory: &[RobotState]) -> Result<Vec<RobotState>, WorkspaceError> {
    if trajectory.is_empty() {
        return Err(WorkspaceError::EmptyTrajectory);
    }
    Ok(trajectory
        .iter()
        .map(|s| {
            let [x, y, z] = clamp_waypoint(region, s.position());
            RobotState { x, y, z, phi: s.phi }
        })
        .collect())
}

/// Execution-time check on the endpoint of a single step.
pub fn gate_step(
    region: &SafeRegion,
    current: &RobotState,
    proposed: &RobotState,
) -> Result<GateDecision, WorkspaceError> {
    if !region.contains_state(current) {
        return Err(WorkspaceError::SafetyViolation { x: current.x, y: current.y, z: current.z });
    }
    if proposed.is_finite() && region.contains_state(proposed) {
        Ok(GateDecision::Execute(*proposed))
    } else {
        Ok(GateDecision::Hold(*current))
    }
}
