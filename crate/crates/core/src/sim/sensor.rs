use nalgebra::{Vector3, Vector6};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::world::{CameraModel, NoiseModel, World};
use crate::geometry::{FrameId, Pose};
use crate::obslog::{ObservationLog, Record};
use crate::trajectory::Trajectory;

/// Markers seen at grazing angles beyond this are rejected.
pub const MAX_VIEW_ANGLE_DEG: f64 = 80.0;

/// Markers inside the camera frustum, facing it, with their exact `T_M^C`.
/// The camera looks along its +z axis.
pub fn visible_markers(robot_pose: &Pose, extrinsic: &Pose, world: &World, camera: &CameraModel) -> Vec<(u32, Pose)> {
    let Ok(t_cg) = robot_pose.compose(extrinsic) else {
        return Vec::new();
    };
    let t_gc = t_cg.inverse();
    let half_h = camera.fov_h.to_radians() / 2.0;
    let half_v = camera.fov_v.to_radians() / 2.0;
    let cos_view = MAX_VIEW_ANGLE_DEG.to_radians().cos();
    let mut out = Vec::new();
    for m in &world.markers {
        let Ok(t_mc) = t_gc.compose(&m.pose) else { continue };
        let p = t_mc.translation();
        let range = p.norm();
        if range < camera.min_range || range > camera.max_range || p.z <= 0.0 {
            continue;
        }
        if p.x.abs().atan2(p.z) > half_h || p.y.abs().atan2(p.z) > half_v {
            continue;
        }
        let normal = t_mc.rotation() * Vector3::z();
        if (p / range).dot(&normal) <= cos_view {
            continue;
        }
        out.push((m.id, t_mc));
    }
    out
}

struct TwistNoise {
    rng: ChaCha8Rng,
}

impl TwistNoise {
    fn sample(&mut self, sigma_t: f64, sigma_r: f64) -> Vector6<f64> {
        let mut z = [0.0f64; 6];
        for v in &mut z {
            *v = StandardNormal.sample(&mut self.rng);
        }
        Vector6::new(z[0] * sigma_t, z[1] * sigma_t, z[2] * sigma_t, z[3] * sigma_r, z[4] * sigma_r, z[5] * sigma_r)
    }

    fn perturb(&mut self, pose: &Pose, sigma_t: f64, sigma_r: f64) -> Pose {
        let xi = self.sample(sigma_t, sigma_r);
        if xi == Vector6::zeros() {
            return *pose;
        }
        let noise = Pose::exp_map(&xi, pose.from_frame(), pose.from_frame());
        pose.compose(&noise).expect("same frame")
    }
}

/// Odometry increments and marker detections along `trajectory`.
///
/// Both are the exact relative poses right-multiplied by `exp` of a Gaussian
/// twist. Sample 0 emits detections only; every later sample emits one
/// odometry record followed by its detections. All randomness comes from
/// `noise.seed`.
pub fn synthesize_log(
    trajectory: &Trajectory,
    world: &World,
    camera: &CameraModel,
    extrinsic: &Pose,
    noise: &NoiseModel,
) -> ObservationLog {
    let mut rng = TwistNoise { rng: ChaCha8Rng::seed_from_u64(noise.seed) };
    let mut records = Vec::new();
    let samples = trajectory.samples();
    for (i, s) in samples.iter().enumerate() {
        if i > 0 {
            let prev = &samples[i - 1].pose;
            let exact = prev.inverse().compose(&s.pose).expect("robot frames").retagged(FrameId::Robot, FrameId::Robot);
            let meas = rng.perturb(&exact, noise.odom_sigma_t, noise.odom_sigma_r);
            records.push(Record::odometry(s.t, meas));
        }
        for (id, t_mc) in visible_markers(&s.pose, extrinsic, world, camera) {
            let meas = rng.perturb(&t_mc, noise.marker_sigma_t, noise.marker_sigma_r);
            records.push(Record::marker(s.t, id, meas));
        }
    }
    ObservationLog::new(records).expect("trajectory stamps increase")
}

/// Composes the odometry of a log onto `start`, one pose per odometry record.
pub fn dead_reckon(start: &Pose, log: &ObservationLog) -> Vec<(f64, Pose)> {
    let mut pose = *start;
    let mut out = Vec::new();
    for r in log.records() {
        if let crate::obslog::Payload::Odometry(delta) = r.payload {
            pose = pose.compose(&delta).expect("robot frames");
            out.push((r.t, pose));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::world::MarkerSpec;
    use approx::assert_relative_eq;
    use nalgebra::UnitQuaternion;

    const R: FrameId = FrameId::Robot;
    const G: FrameId = FrameId::World;
    const C: FrameId = FrameId::Camera;

    /// Marker `dist` meters along +z of an identity camera, facing away from it.
    fn world_with_marker_at(center: Vector3<f64>) -> World {
        let pose = Pose::new(UnitQuaternion::identity(), center, FrameId::Marker(1), G);
        World::new(vec![MarkerSpec { id: 1, side_length: 0.1, pose }], vec![], vec![]).unwrap()
    }

    #[test]
    fn marker_on_axis_is_seen() {
        let world = world_with_marker_at(Vector3::new(0.0, 0.0, 2.0));
        let seen = visible_markers(&Pose::identity(R, G), &Pose::identity(C, R), &world, &CameraModel::default());
        assert_eq!(seen.len(), 1);
        assert_relative_eq!(seen[0].1.translation(), Vector3::new(0.0, 0.0, 2.0), epsilon = 1e-15);
    }

    #[test]
    fn marker_behind_is_not_seen() {
        let world = world_with_marker_at(Vector3::new(0.0, 0.0, -2.0));
        let seen = visible_markers(&Pose::identity(R, G), &Pose::identity(C, R), &world, &CameraModel::default());
        assert!(seen.is_empty());
    }

    #[test]
    fn horizontal_fov_boundary() {
        // Oracle: place the marker on a ray at a known angle from the axis.
        let cam = CameraModel::default();
        let half = cam.fov_h.to_radians() / 2.0;
        let seen_at = |angle: f64| {
            let dir = Vector3::new(angle.sin(), 0.0, angle.cos());
            let world = world_with_marker_at(dir * 2.0);
            !visible_markers(&Pose::identity(R, G), &Pose::identity(C, R), &world, &cam).is_empty()
        };
        assert!(!seen_at(half + 1e-3));
        assert!(seen_at(half - 1e-3));
    }

    #[test]
    fn grazing_view_is_rejected() {
        // Marker normal tilted 85 degrees away from the viewing ray.
        let q = UnitQuaternion::from_euler_angles(0.0, 85f64.to_radians(), 0.0);
        let pose = Pose::new(q, Vector3::new(0.0, 0.0, 2.0), FrameId::Marker(1), G);
        let world = World::new(vec![MarkerSpec { id: 1, side_length: 0.1, pose }], vec![], vec![]).unwrap();
        let seen = visible_markers(&Pose::identity(R, G), &Pose::identity(C, R), &world, &CameraModel::default());
        assert!(seen.is_empty());
    }

    #[test]
    fn range_limits() {
        for (z, expect) in [(0.2, false), (0.5, true), (5.9, true), (6.5, false)] {
            let world = world_with_marker_at(Vector3::new(0.0, 0.0, z));
            let seen = visible_markers(&Pose::identity(R, G), &Pose::identity(C, R), &world, &CameraModel::default());
            assert_eq!(!seen.is_empty(), expect, "z = {z}");
        }
    }

    #[test]
    fn twist_noise_statistics() {
        let mut noise = TwistNoise { rng: ChaCha8Rng::seed_from_u64(42) };
        let exact = Pose::from_translation(Vector3::new(0.05, 0.0, 0.0), R, R);
        let mut comps = Vec::new();
        for _ in 0..1000 {
            let meas = noise.perturb(&exact, 0.02, 0.0);
            let xi = exact.inverse().compose(&meas).unwrap().log_map().unwrap();
            comps.extend([xi[0], xi[1], xi[2]]);
        }
        let n = comps.len() as f64;
        let mean = comps.iter().sum::<f64>() / n;
        let var = comps.iter().map(|c| (c - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let std = var.sqrt();
        assert!((0.018..=0.022).contains(&std), "std = {std}");
    }
}
