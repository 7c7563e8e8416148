//! Structural elements and places inferred from mapped markers.

use nalgebra::Vector3;

use super::graph::{PlaceNode, WallNode};
use super::SlamError;
use crate::geometry::Pose;
use crate::semantic::PlaceKind;

/// Plane through the markers of one wall.
///
/// The normal is the normalized mean of the marker z-axes, each first
/// flipped to agree with the first marker. It is then oriented to point
/// away from `camera`, the last position the wall was observed from.
pub fn detect_wall(id: &str, markers: &[(u32, Pose)], camera: &Vector3<f64>) -> Result<WallNode, SlamError> {
    let Some((_, first)) = markers.first() else {
        return Err(SlamError::DegenerateWall(id.to_string()));
    };
    let reference = first.rotation() * Vector3::z();
    let mut sum = Vector3::zeros();
    let mut centroid = Vector3::zeros();
    for (_, pose) in markers {
        let z = pose.rotation() * Vector3::z();
        sum += if z.dot(&reference) < 0.0 { -z } else { z };
        centroid += pose.translation();
    }
    let mean = sum / markers.len() as f64;
    if mean.norm() < 1e-6 {
        return Err(SlamError::DegenerateWall(id.to_string()));
    }
    let anchor = centroid / markers.len() as f64;
    let mut normal = mean.normalize();
    if normal.dot(&(anchor - camera)) < 0.0 {
        normal = -normal;
    }
    let mut ids: Vec<u32> = markers.iter().map(|(m, _)| *m).collect();
    ids.sort_unstable();
    Ok(WallNode { id: id.to_string(), normal, offset: -normal.dot(&anchor), anchor, markers: ids })
}

fn anchor_center(walls: &[&WallNode]) -> Vector3<f64> {
    let mut c = walls.iter().map(|w| w.anchor).sum::<Vector3<f64>>() / walls.len() as f64;
    c.z = 0.0;
    c
}

pub fn infer_room(id: &str, walls: &[&WallNode]) -> Result<PlaceNode, SlamError> {
    if walls.len() != 4 {
        return Err(SlamError::MissingWall { place: id.to_string(), expected: 4, found: walls.len() });
    }
    Ok(PlaceNode {
        id: id.to_string(),
        kind: PlaceKind::Room,
        center: anchor_center(walls),
        axis: None,
        walls: walls.iter().map(|w| w.id.clone()).collect(),
    })
}

/// Corridor between two walls whose normals agree to within `max_angle_deg`.
pub fn infer_corridor(id: &str, walls: &[&WallNode], max_angle_deg: f64) -> Result<PlaceNode, SlamError> {
    if walls.len() != 2 {
        return Err(SlamError::MissingWall { place: id.to_string(), expected: 2, found: walls.len() });
    }
    let (n1, n2) = (walls[0].normal, walls[1].normal);
    let cos = n1.dot(&n2).abs();
    if cos <= max_angle_deg.to_radians().cos() {
        return Err(SlamError::NotParallel { place: id.to_string(), angle_deg: cos.min(1.0).acos().to_degrees() });
    }
    let axis = n1.cross(&Vector3::z());
    if axis.norm() < 1e-9 {
        return Err(SlamError::NotParallel { place: id.to_string(), angle_deg: 90.0 });
    }
    Ok(PlaceNode {
        id: id.to_string(),
        kind: PlaceKind::Corridor,
        center: anchor_center(walls),
        axis: Some(axis.normalize()),
        walls: walls.iter().map(|w| w.id.clone()).collect(),
    })
}
