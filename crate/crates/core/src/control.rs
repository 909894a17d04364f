//! Proportional velocity tracking of knife waypoints against a simulated
//! plant, with every step passed through the safety gate.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::calib::wrap_angle;
use crate::planner::Waypoint;
use crate::workspace::{gate_step, GateDecision, RobotState, SafeRegion, WorkspaceError};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ControllerConfig {
    /// Proportional gain, 1/s.
    pub gain_k: f64,
    /// Control rate, Hz.
    pub rate: f64,
    /// Positional distance, meters, at which the next waypoint becomes the
    /// target.
    pub waypoint_tolerance: f64,
    /// Longest time spent on one waypoint before giving up, seconds.
    pub stall_timeout: f64,
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self { gain_k: 50.0, rate: 1000.0, waypoint_tolerance: 5e-4, stall_timeout: 10.0 }
    }
}

impl ControllerConfig {
    pub fn dt(&self) -> f64 {
        1.0 / self.rate
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        let kdt = self.gain_k * self.dt();
        if !(kdt > 0.0 && kdt <= 1.0) || !kdt.is_finite() {
            return Err(ControlError::InvalidConfig(format!("K*dt = {kdt} must lie in (0, 1]")));
        }
        if !(self.waypoint_tolerance >= 0.0 && self.stall_timeout > 0.0) {
            return Err(ControlError::InvalidConfig("tolerance and timeout must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PlantKind {
    /// Commands are realized exactly over one step.
    Ideal,
    /// First-order lag between command and realized velocity.
    Lagged,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlantModel {
    pub kind: PlantKind,
    /// Lag time constant, seconds.
    pub lag_tau: f64,
    /// Standard deviation of additive velocity noise on x, y, z, m/s.
    pub command_noise_sigma: f64,
    pub seed: u64,
}

impl Default for PlantModel {
    fn default() -> Self {
        Self { kind: PlantKind::Ideal, lag_tau: 0.01, command_noise_sigma: 0.002, seed: 0 }
    }
}

impl PlantModel {
    pub fn ideal() -> Self {
        Self { command_noise_sigma: 0.0, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        if self.kind == PlantKind::Lagged && !(self.lag_tau > 0.0) {
            return Err(ControlError::InvalidConfig("lag_tau must be positive".into()));
        }
        if !(self.command_noise_sigma >= 0.0 && self.command_noise_sigma.is_finite()) {
            return Err(ControlError::InvalidConfig("noise sigma must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimedState {
    pub t: f64,
    pub state: RobotState,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrackingReport {
    /// Mean positional distance to the current target over all steps, meters.
    pub mean_error: f64,
    pub max_error: f64,
    /// Mean absolute wrapped heading error, radians.
    pub mean_heading_error: f64,
    pub executed: Vec<TimedState>,
    pub desired: Vec<TimedState>,
    /// Plan index targeted at each executed state; the initial state gets
    /// the first target.
    pub targets: Vec<usize>,
    /// Steps dropped by the safety gate.
    pub held_steps: usize,
}

#[derive(Debug, Error)]
pub enum ControlError {
    #[error("invalid controller configuration: {0}")]
    InvalidConfig(String),
    #[error("plan is empty")]
    EmptyPlan,
    #[error("waypoint {waypoint} not reached within {seconds} s")]
    Stall { waypoint: usize, seconds: f64 },
    #[error("desired time {t} lies outside the actual trajectory")]
    Alignment { t: f64 },
    #[error(transparent)]
    Workspace(#[from] WorkspaceError),
}

/// `u = K (s_d - s)` per component, heading error wrapped to `(-pi, pi]`.
pub fn step_controller(state: &RobotState, desired: &RobotState, cfg: &ControllerConfig) -> [f64; 4] {
    let k = cfg.gain_k;
    [
        k * (desired.x - state.x),
        k * (desired.y - state.y),
        k * (desired.z - state.z),
        k * wrap_angle(desired.phi - state.phi),
    ]
}

/// Tracks `plan` starting from its first waypoint.
pub fn simulate_tracking(
    plan: &[Waypoint],
    cfg: &ControllerConfig,
    plant: &PlantModel,
    region: &SafeRegion,
) -> Result<TrackingReport, ControlError> {
    let start = plan.first().ok_or(ControlError::EmptyPlan)?.state;
    simulate_tracking_from(start, plan, cfg, plant, region)
}

/// Tracks `plan` from an arbitrary start state.
pub fn simulate_tracking_from(
    start: RobotState,
    plan: &[Waypoint],
    cfg: &ControllerConfig,
    plant: &PlantModel,
    region: &SafeRegion,
) -> Result<TrackingReport, ControlError> {
    cfg.validate()?;
    plant.validate()?;
    if plan.is_empty() {
        return Err(ControlError::EmptyPlan);
    }
    if !region.contains_state(&start) {
        return Err(WorkspaceError::SafetyViolation { x: start.x, y: start.y, z: start.z }.into());
    }
    let dt = cfg.dt();
    let mut rng = ChaCha8Rng::seed_from_u64(plant.seed);
    let noise = Normal::new(0.0, plant.command_noise_sigma)
        .map_err(|e| ControlError::InvalidConfig(e.to_string()))?;
    let max_steps_per_wp = (cfg.stall_timeout * cfg.rate).ceil() as usize;

    let mut s = start;
    let mut v = [0.0f64; 4];
    let mut idx = 0;
    let mut steps_on_wp = 0;
    let mut executed = vec![TimedState { t: 0.0, state: s }];
    let (mut sum, mut max, mut heading_sum, mut held) = (0.0, 0.0f64, 0.0, 0usize);
    let last = plan.len() - 1;

    let advance = |idx: &mut usize, s: &RobotState| {
        while *idx < last && s.position_distance(&plan[*idx].state) <= cfg.waypoint_tolerance {
            *idx += 1;
        }
    };
    advance(&mut idx, &s);
    let mut targets = vec![idx];

    while !(idx == last && s.position_distance(&plan[last].state) <= cfg.waypoint_tolerance) {
        let target = plan[idx].state;
        let mut u = step_controller(&s, &target, cfg);
        if plant.command_noise_sigma > 0.0 {
            for c in u.iter_mut().take(3) {
                *c += noise.sample(&mut rng);
            }
        }
        match plant.kind {
            PlantKind::Ideal => v = u,
            PlantKind::Lagged => {
                let a = dt / plant.lag_tau;
                for i in 0..4 {
                    v[i] += (u[i] - v[i]) * a.min(1.0);
                }
            }
        }
        let proposed = RobotState::new(s.x + v[0] * dt, s.y + v[1] * dt, s.z + v[2] * dt, wrap_angle(s.phi + v[3] * dt));
        match gate_step(region, &s, &proposed)? {
            GateDecision::Execute(next) => s = next,
            GateDecision::Hold(_) => {
                held += 1;
                v = [0.0; 4];
            }
        }
        let e = s.position_distance(&target);
        sum += e;
        max = max.max(e);
        heading_sum += wrap_angle(target.phi - s.phi).abs();
        executed.push(TimedState { t: executed.len() as f64 * dt, state: s });
        targets.push(idx);

        let before = idx;
        advance(&mut idx, &s);
        if idx != before {
            steps_on_wp = 0;
        } else {
            steps_on_wp += 1;
            if steps_on_wp > max_steps_per_wp {
                return Err(ControlError::Stall { waypoint: idx, seconds: cfg.stall_timeout });
            }
        }
    }

    let n = (executed.len() - 1).max(1) as f64;
    Ok(TrackingReport {
        mean_error: sum / n,
        max_error: max,
        mean_heading_error: heading_sum / n,
        executed,
        desired: plan.iter().map(|w| TimedState { t: w.t, state: w.state }).collect(),
        targets,
        held_steps: held,
    })
}

/// Mean positional distance between `desired` and `actual` resampled at the
/// desired timestamps by linear interpolation.
pub fn tracking_error(desired: &[TimedState], actual: &[TimedState]) -> Result<f64, ControlError> {
    if desired.is_empty() || actual.is_empty() {
        return Err(ControlError::EmptyPlan);
    }
    let mut j = 0;
    let mut sum = 0.0;
    for d in desired {
        if d.t < actual[0].t || d.t > actual[actual.len() - 1].t {
            return Err(ControlError::Alignment { t: d.t });
        }
        while j + 1 < actual.len() && actual[j + 1].t < d.t {
            j += 1;
        }
        let a = if actual[j].t == d.t || j + 1 == actual.len() {
            actual[j].state
        } else {
            let (p, q) = (actual[j], actual[j + 1]);
            let w = (d.t - p.t) / (q.t - p.t);
            RobotState::new(
                p.state.x + (q.state.x - p.state.x) * w,
                p.state.y + (q.state.y - p.state.y) * w,
                p.state.z + (q.state.z - p.state.z) * w,
                p.state.phi,
            )
        };
        sum += d.state.position_distance(&a);
    }
    Ok(sum / desired.len() as f64)
}
