//! Geometry, calibration, perception, planning and control for a
//! vision-guided meat-cutting robot.

pub mod calib;
pub mod control;
pub mod geometry;
pub mod planner;
pub mod vision;
pub mod workspace;

pub use geometry::Point2;
