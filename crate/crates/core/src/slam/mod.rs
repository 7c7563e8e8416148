//! Keyframe pose-graph SLAM over odometry and marker detections, with
//! semantic analysis of walls, doors, rooms, and corridors.

pub mod config;
pub mod frontend;
pub mod graph;
pub mod optimizer;
pub mod pipeline;
pub mod scene_graph;
pub mod semantics;

pub use config::SlamConfig;
pub use frontend::{Frontend, KeyframeEvent};
pub use graph::{Factor, Graph};
pub use optimizer::{optimize, OptimizerReport};
pub use pipeline::{dead_reckoning, run, run_threaded, Backend, SlamOutput, SlamReport};
pub use scene_graph::{Header, SceneGraph};

use thiserror::Error;

use crate::geometry::GeometryError;
use crate::obslog::LogError;
use crate::sim::SimError;
use crate::trajectory::TrajectoryError;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SlamError {
    #[error(transparent)]
    Log(#[from] LogError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error("config: {0}")]
    Config(String),
    #[error("unknown node: {0}")]
    UnknownNode(String),
    #[error("marker {0} already initialized")]
    DuplicateMarker(u32),
    #[error("keyframe event {found} out of order, expected {expected}")]
    KeyframeOrder { expected: usize, found: usize },
    #[error("wall {0}: degenerate marker normals")]
    DegenerateWall(String),
    #[error("place {place}: expected {expected} walls, found {found}")]
    MissingWall { place: String, expected: usize, found: usize },
    #[error("corridor {place}: walls are {angle_deg:.2} degrees from parallel")]
    NotParallel { place: String, angle_deg: f64 },
    #[error("normal equations stayed singular after {escalations} damping escalations (lambda {lambda:e})")]
    Singular { escalations: usize, lambda: f64 },
    #[error("scene graph: {0}")]
    SceneGraph(String),
}
