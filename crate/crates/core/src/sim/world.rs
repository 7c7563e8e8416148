use std::collections::{BTreeMap, BTreeSet};

use nalgebra::Vector3;

use super::SimError;
use crate::geometry::{FrameId, Pose};
use crate::semantic::{PlaceKind, SemanticDb};

/// Tolerance for the geometric consistency of authored worlds.
const WORLD_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MarkerSpec {
    pub id: u32,
    pub side_length: f64,
    /// `T_M^G`. The z-axis is the marker normal and points into the surface
    /// it hangs on; the x-axis points down.
    pub pose: Pose,
}

impl MarkerSpec {
    pub fn center(&self) -> Vector3<f64> {
        self.pose.translation()
    }

    pub fn z_axis(&self) -> Vector3<f64> {
        self.pose.rotation() * Vector3::z()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extent {
    pub center: Vector3<f64>,
    pub width: f64,
    pub height: f64,
}

/// Planar wall `n . p + d = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct WallSpec {
    pub id: String,
    pub normal: Vector3<f64>,
    pub offset: f64,
    pub extent: Extent,
    pub markers: Vec<u32>,
}

impl WallSpec {
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.offset
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoorSpec {
    pub id: String,
    pub markers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct World {
    pub markers: Vec<MarkerSpec>,
    pub walls: Vec<WallSpec>,
    pub doors: Vec<DoorSpec>,
}

impl World {
    /// Checks marker uniqueness and marker/wall coplanarity. Markers are kept
    /// sorted by id.
    pub fn new(mut markers: Vec<MarkerSpec>, walls: Vec<WallSpec>, doors: Vec<DoorSpec>) -> Result<Self, SimError> {
        markers.sort_by_key(|m| m.id);
        for w in markers.windows(2) {
            if w[0].id == w[1].id {
                return Err(SimError::DuplicateMarker(w[0].id));
            }
        }
        for m in &markers {
            if !(m.side_length > 0.0) {
                return Err(SimError::InvalidMarker { id: m.id, reason: "side length must be positive".into() });
            }
            if m.pose.from_frame() != FrameId::Marker(m.id) || m.pose.to_frame() != FrameId::World {
                return Err(SimError::InvalidMarker { id: m.id, reason: "pose must map marker to world".into() });
            }
        }
        let world = Self { markers, walls, doors };
        let mut attached = BTreeSet::new();
        for wall in &world.walls {
            if (wall.normal.norm() - 1.0).abs() > WORLD_TOL {
                return Err(SimError::InvalidWall { id: wall.id.clone(), reason: "normal is not unit length".into() });
            }
            for &mid in &wall.markers {
                let m = world.marker(mid).ok_or(SimError::UnknownMarker(mid))?;
                if !attached.insert(mid) {
                    return Err(SimError::InvalidMarker { id: mid, reason: "attached to two elements".into() });
                }
                if wall.distance(&m.center()).abs() > WORLD_TOL {
                    return Err(SimError::InvalidWall {
                        id: wall.id.clone(),
                        reason: format!("marker {mid} is off the plane"),
                    });
                }
                if 1.0 - m.z_axis().dot(&wall.normal).abs() > WORLD_TOL {
                    return Err(SimError::InvalidWall {
                        id: wall.id.clone(),
                        reason: format!("marker {mid} is not parallel to the plane"),
                    });
                }
            }
        }
        for door in &world.doors {
            for &mid in &door.markers {
                world.marker(mid).ok_or(SimError::UnknownMarker(mid))?;
                if !attached.insert(mid) {
                    return Err(SimError::InvalidMarker { id: mid, reason: "attached to two elements".into() });
                }
            }
        }
        Ok(world)
    }

    pub fn marker(&self, id: u32) -> Option<&MarkerSpec> {
        self.markers.binary_search_by_key(&id, |m| m.id).ok().map(|i| &self.markers[i])
    }

    pub fn wall(&self, id: &str) -> Option<&WallSpec> {
        self.walls.iter().find(|w| w.id == id)
    }

    /// Centroid of the centers of the markers on `wall`.
    pub fn wall_anchor(&self, wall: &WallSpec) -> Option<Vector3<f64>> {
        if wall.markers.is_empty() {
            return None;
        }
        let sum =
            wall.markers.iter().filter_map(|id| self.marker(*id)).fold(Vector3::zeros(), |acc, m| acc + m.center());
        Some(sum / wall.markers.len() as f64)
    }

    /// Ground-truth place centers: mean of the wall anchors, projected to the
    /// floor.
    pub fn place_centers(&self, db: &SemanticDb) -> BTreeMap<String, (PlaceKind, Vector3<f64>)> {
        let mut out = BTreeMap::new();
        for (id, kind, walls) in db.places() {
            let anchors: Option<Vec<_>> =
                walls.iter().map(|w| self.wall(w).and_then(|w| self.wall_anchor(w))).collect();
            if let Some(anchors) = anchors {
                let mut c = anchors.iter().sum::<Vector3<f64>>() / anchors.len() as f64;
                c.z = 0.0;
                out.insert(id.to_string(), (kind, c));
            }
        }
        out
    }
}

/// Pinhole field-of-view model; angles in degrees, ranges in meters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraModel {
    pub fov_h: f64,
    pub fov_v: f64,
    pub max_range: f64,
    pub min_range: f64,
}

impl Default for CameraModel {
    fn default() -> Self {
        Self { fov_h: 87.0, fov_v: 58.0, max_range: 6.0, min_range: 0.3 }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let fov_ok = |f: f64| f > 0.0 && f < 180.0;
        if !fov_ok(self.fov_h) || !fov_ok(self.fov_v) {
            return Err(SimError::InvalidCamera("field of view must lie in (0, 180) degrees".into()));
        }
        if !(self.min_range > 0.0 && self.min_range < self.max_range) {
            return Err(SimError::InvalidCamera("require 0 < min_range < max_range".into()));
        }
        Ok(())
    }
}

/// Per-step odometry and per-detection marker noise (meters, radians).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub odom_sigma_t: f64,
    pub odom_sigma_r: f64,
    pub marker_sigma_t: f64,
    pub marker_sigma_r: f64,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            odom_sigma_t: 0.002,
            odom_sigma_r: 0.001,
            marker_sigma_t: 0.02,
            marker_sigma_r: 1f64.to_radians(),
            seed: 0,
        }
    }
}

impl NoiseModel {
    pub fn zero(seed: u64) -> Self {
        Self { odom_sigma_t: 0.0, odom_sigma_r: 0.0, marker_sigma_t: 0.0, marker_sigma_r: 0.0, seed }
    }

    pub fn scaled(&self, k: f64) -> Self {
        Self {
            odom_sigma_t: self.odom_sigma_t * k,
            odom_sigma_r: self.odom_sigma_r * k,
            marker_sigma_t: self.marker_sigma_t * k,
            marker_sigma_r: self.marker_sigma_r * k,
            seed: self.seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let sigmas = [self.odom_sigma_t, self.odom_sigma_r, self.marker_sigma_t, self.marker_sigma_r];
        if sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return Err(SimError::InvalidNoise);
        }
        Ok(())
    }
}
