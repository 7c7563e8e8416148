use nalgebra::Vector3;

use super::SimError;
use crate::geometry::{FrameId, Pose};
use crate::trajectory::{StampedPose, Trajectory};

/// Samples a constant-speed path through `waypoints` at `rate` Hz.
///
/// Positions are interpolated linearly along each segment and orientations
/// by slerp, with the segment fraction as parameter. The first sample sits on
/// the first waypoint at t = 0.
pub fn generate_trajectory(waypoints: &[Pose], rate: f64, speed: f64) -> Result<Trajectory, SimError> {
    if waypoints.len() < 2 {
        return Err(SimError::TooFewWaypoints(waypoints.len()));
    }
    if !(rate > 0.0 && rate.is_finite()) {
        return Err(SimError::InvalidRate(rate));
    }
    if !(speed > 0.0 && speed.is_finite()) {
        return Err(SimError::InvalidSpeed(speed));
    }
    let mut cumulative = Vec::with_capacity(waypoints.len());
    cumulative.push(0.0);
    for (i, w) in waypoints.windows(2).enumerate() {
        let len = (w[1].translation() - w[0].translation()).norm();
        if len < 1e-9 {
            return Err(SimError::CoincidentWaypoints(i));
        }
        if w[0].rotation().try_slerp(w[1].rotation(), 0.5, 1e-9).is_none() {
            return Err(SimError::AmbiguousRotation(i));
        }
        cumulative.push(cumulative[i] + len);
    }
    let total = *cumulative.last().expect("non-empty");
    let count = ((total / speed) * rate + 1e-9).floor() as usize + 1;

    let mut samples = Vec::with_capacity(count);
    let mut segment = 0;
    for k in 0..count {
        let t = k as f64 / rate;
        let s = (speed * t).min(total);
        while segment + 1 < waypoints.len() - 1 && cumulative[segment + 1] <= s {
            segment += 1;
        }
        let (a, b) = (&waypoints[segment], &waypoints[segment + 1]);
        let len = cumulative[segment + 1] - cumulative[segment];
        let f = ((s - cumulative[segment]) / len).clamp(0.0, 1.0);
        let p: Vector3<f64> = a.translation() * (1.0 - f) + b.translation() * f;
        let q = a.rotation().try_slerp(b.rotation(), f, 1e-9).expect("checked above");
        samples.push(StampedPose { t, pose: Pose::new(q, p, FrameId::Robot, FrameId::World) });
    }
    Ok(Trajectory::new(samples).expect("stamps increase with k"))
}
