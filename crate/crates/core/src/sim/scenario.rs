//! Scenario files: world geometry, sensor and noise models, and the flight
//! plan, in JSON.

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::motion::generate_trajectory;
use super::sensor::synthesize_log;
use super::world::{CameraModel, DoorSpec, Extent, MarkerSpec, NoiseModel, WallSpec, World};
use super::SimError;
use crate::geometry::{marker_rotation_from_normal, FrameId, Pose};
use crate::obslog::ObservationLog;
use crate::trajectory::Trajectory;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PoseJson {
    pub t: [f64; 3],
    #[serde(default = "identity_q")]
    pub q: [f64; 4],
}

fn identity_q() -> [f64; 4] {
    [0.0, 0.0, 0.0, 1.0]
}

impl PoseJson {
    pub fn to_pose(&self, from: FrameId, to: FrameId) -> Result<Pose, SimError> {
        Ok(Pose::from_components(self.t, self.q, from, to)?)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MarkerJson {
    pub id: u32,
    pub center: [f64; 3],
    /// Marker z-axis in world coordinates, pointing into the surface.
    pub normal: [f64; 3],
    #[serde(default = "default_side")]
    pub side_length: f64,
}

fn default_side() -> f64 {
    0.10
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExtentJson {
    pub center: [f64; 3],
    pub width: f64,
    pub height: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WallJson {
    pub id: String,
    pub normal: [f64; 3],
    pub offset: f64,
    pub extent: ExtentJson,
    #[serde(default)]
    pub markers: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DoorJson {
    pub id: String,
    pub markers: Vec<u32>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WorldJson {
    pub markers: Vec<MarkerJson>,
    #[serde(default)]
    pub walls: Vec<WallJson>,
    #[serde(default)]
    pub doors: Vec<DoorJson>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct CameraJson {
    #[serde(default = "fov_h")]
    pub fov_h: f64,
    #[serde(default = "fov_v")]
    pub fov_v: f64,
    #[serde(default = "max_range")]
    pub max_range: f64,
    #[serde(default = "min_range")]
    pub min_range: f64,
}

fn fov_h() -> f64 {
    CameraModel::default().fov_h
}
fn fov_v() -> f64 {
    CameraModel::default().fov_v
}
fn max_range() -> f64 {
    CameraModel::default().max_range
}
fn min_range() -> f64 {
    CameraModel::default().min_range
}

impl Default for CameraJson {
    fn default() -> Self {
        let c = CameraModel::default();
        Self { fov_h: c.fov_h, fov_v: c.fov_v, max_range: c.max_range, min_range: c.min_range }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct NoiseJson {
    pub odom_sigma_t: f64,
    pub odom_sigma_r: f64,
    pub marker_sigma_t: f64,
    pub marker_sigma_r: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for NoiseJson {
    fn default() -> Self {
        let n = NoiseModel::default();
        Self {
            odom_sigma_t: n.odom_sigma_t,
            odom_sigma_r: n.odom_sigma_r,
            marker_sigma_t: n.marker_sigma_t,
            marker_sigma_r: n.marker_sigma_r,
            seed: n.seed,
        }
    }
}

/// Waypoint with either a full quaternion or a yaw angle about world z.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct WaypointJson {
    pub position: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub yaw_deg: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q: Option<[f64; 4]>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ScenarioJson {
    pub name: String,
    pub world: WorldJson,
    #[serde(default)]
    pub camera: CameraJson,
    #[serde(default)]
    pub noise: NoiseJson,
    pub waypoints: Vec<WaypointJson>,
    #[serde(default = "default_rate")]
    pub rate: f64,
    pub speed: f64,
    /// Camera-to-robot transform `T_C^R`; identity when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extrinsic: Option<PoseJson>,
}

fn default_rate() -> f64 {
    30.0
}

/// A validated scenario ready for simulation.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub world: World,
    pub camera: CameraModel,
    pub noise: NoiseModel,
    pub waypoints: Vec<Pose>,
    pub rate: f64,
    pub speed: f64,
    pub extrinsic: Pose,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, SimError> {
        let raw: ScenarioJson = serde_json::from_str(text).map_err(|e| SimError::Scenario(e.to_string()))?;
        Self::from_json(&raw)
    }

    pub fn from_json(raw: &ScenarioJson) -> Result<Self, SimError> {
        let markers = raw
            .world
            .markers
            .iter()
            .map(|m| {
                let rotation = marker_rotation_from_normal(&Vector3::from(m.normal)).ok_or_else(|| {
                    SimError::InvalidMarker { id: m.id, reason: "normal must be non-vertical and non-zero".into() }
                })?;
                Ok(MarkerSpec {
                    id: m.id,
                    side_length: m.side_length,
                    pose: Pose::new(rotation, Vector3::from(m.center), FrameId::Marker(m.id), FrameId::World),
                })
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        let walls = raw
            .world
            .walls
            .iter()
            .map(|w| {
                let n = Vector3::from(w.normal);
                let norm = n.norm();
                if !(norm > 0.0) {
                    return Err(SimError::InvalidWall { id: w.id.clone(), reason: "zero normal".into() });
                }
                Ok(WallSpec {
                    id: w.id.clone(),
                    normal: n / norm,
                    offset: w.offset / norm,
                    extent: Extent {
                        center: Vector3::from(w.extent.center),
                        width: w.extent.width,
                        height: w.extent.height,
                    },
                    markers: w.markers.clone(),
                })
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        let doors = raw.world.doors.iter().map(|d| DoorSpec { id: d.id.clone(), markers: d.markers.clone() }).collect();
        let world = World::new(markers, walls, doors)?;

        let camera = CameraModel {
            fov_h: raw.camera.fov_h,
            fov_v: raw.camera.fov_v,
            max_range: raw.camera.max_range,
            min_range: raw.camera.min_range,
        };
        camera.validate()?;
        let noise = NoiseModel {
            odom_sigma_t: raw.noise.odom_sigma_t,
            odom_sigma_r: raw.noise.odom_sigma_r,
            marker_sigma_t: raw.noise.marker_sigma_t,
            marker_sigma_r: raw.noise.marker_sigma_r,
            seed: raw.noise.seed,
        };
        noise.validate()?;

        let waypoints = raw
            .waypoints
            .iter()
            .map(|w| {
                let rotation = match (w.q, w.yaw_deg) {
                    (Some(_), Some(_)) => return Err(SimError::Scenario("waypoint sets both q and yaw_deg".into())),
                    (Some(q), None) => *Pose::from_components([0.0; 3], q, FrameId::Robot, FrameId::World)?.rotation(),
                    (None, yaw) => UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw.unwrap_or(0.0).to_radians()),
                };
                Ok(Pose::new(rotation, Vector3::from(w.position), FrameId::Robot, FrameId::World))
            })
            .collect::<Result<Vec<_>, SimError>>()?;
        let extrinsic = match &raw.extrinsic {
            Some(p) => p.to_pose(FrameId::Camera, FrameId::Robot)?,
            None => Pose::identity(FrameId::Camera, FrameId::Robot),
        };
        Ok(Self {
            name: raw.name.clone(),
            world,
            camera,
            noise,
            waypoints,
            rate: raw.rate,
            speed: raw.speed,
            extrinsic,
        })
    }

    /// Initial robot pose, the first waypoint.
    pub fn start_pose(&self) -> Pose {
        self.waypoints.first().copied().unwrap_or_else(|| Pose::identity(FrameId::Robot, FrameId::World))
    }

    pub fn ground_truth(&self) -> Result<Trajectory, SimError> {
        generate_trajectory(&self.waypoints, self.rate, self.speed)
    }

    /// Ground truth and a synthesized log for the given noise model.
    pub fn simulate(&self, noise: &NoiseModel) -> Result<(Trajectory, ObservationLog), SimError> {
        noise.validate()?;
        let gt = self.ground_truth()?;
        let log = synthesize_log(&gt, &self.world, &self.camera, &self.extrinsic, noise);
        Ok((gt, log))
    }
}
