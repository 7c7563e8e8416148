//! Synthetic indoor worlds, ground-truth flights, and noisy observation
//! streams.

mod motion;
mod scenario;
mod sensor;
mod world;

pub use motion::generate_trajectory;
pub use scenario::{
    CameraJson, DoorJson, ExtentJson, MarkerJson, NoiseJson, PoseJson, Scenario, ScenarioJson, WallJson, WaypointJson,
    WorldJson,
};
pub use sensor::{dead_reckon, synthesize_log, visible_markers, MAX_VIEW_ANGLE_DEG};
pub use world::{CameraModel, DoorSpec, Extent, MarkerSpec, NoiseModel, WallSpec, World};

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::trajectory::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("need at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("waypoint {0} coincides with its successor")]
    CoincidentWaypoints(usize),
    #[error("waypoint {0} and its successor are rotated by 180 degrees")]
    AmbiguousRotation(usize),
    #[error("sample rate must be positive, got {0}")]
    InvalidRate(f64),
    #[error("speed must be positive, got {0}")]
    InvalidSpeed(f64),
    #[error("duplicate marker id {0}")]
    DuplicateMarker(u32),
    #[error("unknown marker id {0}")]
    UnknownMarker(u32),
    #[error("marker {id}: {reason}")]
    InvalidMarker { id: u32, reason: String },
    #[error("wall {id}: {reason}")]
    InvalidWall { id: String, reason: String },
    #[error("camera model: {0}")]
    InvalidCamera(String),
    #[error("noise sigmas must be finite and non-negative")]
    InvalidNoise,
    #[error("scenario: {0}")]
    Scenario(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// TUM text for a ground-truth trajectory.
pub fn export_ground_truth(trajectory: &Trajectory) -> String {
    trajectory.to_tum()
}
