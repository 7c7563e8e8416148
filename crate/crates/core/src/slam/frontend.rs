//! Observation-stream front-end: dead reckoning and keyframe promotion.

use super::config::KeyframePolicy;
use super::SlamError;
use crate::geometry::{FrameId, Pose};
use crate::obslog::{OrderCheck, Payload, Record};

/// Odometry accumulated between two keyframes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OdometryEdge {
    pub delta: Pose,
    pub steps: usize,
}

/// A promoted keyframe, as handed to the back-end.
#[derive(Debug, Clone, PartialEq)]
pub struct KeyframeEvent {
    pub index: usize,
    pub stamp: f64,
    /// Dead-reckoned `T_R^G`.
    pub pose: Pose,
    /// Motion from the previous keyframe; `None` for the first one.
    pub odometry: Option<OdometryEdge>,
    pub detections: Vec<(u32, Pose)>,
    /// Dead-reckoned path length since the start.
    pub odometer: f64,
}

#[derive(Debug, Clone)]
pub struct Frontend {
    policy: KeyframePolicy,
    order: OrderCheck,
    pose: Pose,
    odometer: f64,
    /// Stamp of the newest record applied.
    now: Option<f64>,
    since_kf: Pose,
    steps_since_kf: usize,
    last_kf: Option<(f64, Pose)>,
    pending: Option<KeyframeEvent>,
    next_index: usize,
}

impl Frontend {
    pub fn new(policy: KeyframePolicy, initial_pose: Pose) -> Self {
        Self {
            policy,
            order: OrderCheck::default(),
            pose: initial_pose,
            odometer: 0.0,
            now: None,
            since_kf: Pose::identity(FrameId::Robot, FrameId::Robot),
            steps_since_kf: 0,
            last_kf: None,
            pending: None,
            next_index: 0,
        }
    }

    /// Current dead-reckoned pose.
    pub fn pose(&self) -> Pose {
        self.pose
    }

    /// Consumes one record. Returns the keyframe completed by it, if any.
    pub fn ingest(&mut self, record: &Record) -> Result<Option<KeyframeEvent>, SlamError> {
        self.order.check(record)?;
        let mut done = None;
        if self.pending.as_ref().is_some_and(|p| record.t > p.stamp) {
            done = self.pending.take();
        }
        let first = self.now.is_none();
        self.now = Some(record.t);
        match &record.payload {
            Payload::Odometry(delta) => {
                self.pose = self.pose.compose(delta)?;
                self.since_kf = self.since_kf.compose(delta)?;
                self.steps_since_kf += 1;
                self.odometer += delta.translation().norm();
                if first || self.motion_exceeded() {
                    self.promote(record.t);
                }
            }
            Payload::Marker { id, pose } => {
                if first {
                    self.promote(record.t);
                }
                let attach = match &self.pending {
                    Some(p) => p.stamp == record.t,
                    None => {
                        let gap = self.last_kf.map_or(f64::INFINITY, |(t, _)| record.t - t);
                        if gap > self.policy.marker_gap {
                            self.promote(record.t);
                            true
                        } else {
                            false
                        }
                    }
                };
                if attach {
                    let pending = self.pending.as_mut().expect("promoted above");
                    pending.detections.push((*id, *pose));
                }
            }
        }
        Ok(done)
    }

    /// Flushes the keyframe still waiting for later records.
    pub fn finish(&mut self) -> Option<KeyframeEvent> {
        self.pending.take()
    }

    fn motion_exceeded(&self) -> bool {
        self.since_kf.translation().norm() > self.policy.translation
            || self.since_kf.rotation().angle() > self.policy.rotation_deg.to_radians()
    }

    fn promote(&mut self, stamp: f64) {
        let odometry = self.last_kf.map(|_| OdometryEdge { delta: self.since_kf, steps: self.steps_since_kf });
        self.pending = Some(KeyframeEvent {
            index: self.next_index,
            stamp,
            pose: self.pose,
            odometry,
            detections: Vec::new(),
            odometer: self.odometer,
        });
        self.next_index += 1;
        self.last_kf = Some((stamp, self.pose));
        self.since_kf = Pose::identity(FrameId::Robot, FrameId::Robot);
        self.steps_since_kf = 0;
    }
}

/// Runs the front-end over a whole record slice.
pub fn keyframes(
    policy: KeyframePolicy,
    initial_pose: Pose,
    records: &[Record],
) -> Result<Vec<KeyframeEvent>, SlamError> {
    let mut fe = Frontend::new(policy, initial_pose);
    let mut out = Vec::new();
    for r in records {
        out.extend(fe.ingest(r)?);
    }
    out.extend(fe.finish());
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{UnitQuaternion, Vector3};

    const R: FrameId = FrameId::Robot;

    fn step(x: f64) -> Pose {
        Pose::from_translation(Vector3::new(x, 0.0, 0.0), R, R)
    }

    fn start() -> Pose {
        Pose::identity(R, FrameId::World)
    }

    fn detection() -> Pose {
        Pose::from_translation(Vector3::new(0.0, 0.0, 2.0), FrameId::Marker(1), FrameId::Camera)
    }

    #[test]
    fn translation_threshold_walkthrough() {
        let records: Vec<_> = (1..=10).map(|k| Record::odometry(k as f64 * 0.1, step(0.05))).collect();
        let kfs = keyframes(KeyframePolicy::default(), start(), &records).unwrap();
        assert_eq!(kfs.len(), 2);
        assert!(kfs[0].odometry.is_none());
        let edge = kfs[1].odometry.unwrap();
        assert!(edge.delta.translation().x > 0.25);
        // Oracle: first step whose accumulated translation since the start keyframe exceeds 0.25 m.
        let mut since = 0.0;
        let expected = (2..=10)
            .find(|_| {
                since += 0.05;
                since > 0.25
            })
            .unwrap();
        assert!((kfs[1].stamp - expected as f64 * 0.1).abs() < 1e-12);
    }

    #[test]
    fn rotation_threshold() {
        let turn = Pose::new(UnitQuaternion::from_euler_angles(0.0, 0.0, 4f64.to_radians()), Vector3::zeros(), R, R);
        let records: Vec<_> = (1..=8).map(|k| Record::odometry(k as f64, turn)).collect();
        let kfs = keyframes(KeyframePolicy::default(), start(), &records).unwrap();
        // Start after the first turn, then one more once 16 degrees accumulate.
        assert_eq!(kfs.len(), 2);
        assert_eq!(kfs[1].odometry.unwrap().steps, 4);
    }

    #[test]
    fn first_detection_promotes_immediately() {
        let records = vec![Record::marker(0.0, 1, detection()), Record::odometry(0.1, step(0.01))];
        let kfs = keyframes(KeyframePolicy::default(), start(), &records).unwrap();
        assert_eq!(kfs.len(), 1);
        assert_eq!(kfs[0].stamp, 0.0);
        assert_eq!(kfs[0].detections.len(), 1);
    }

    #[test]
    fn detections_respect_marker_gap() {
        let mut records = Vec::new();
        for k in 1..=20 {
            let t = k as f64 * 0.1;
            records.push(Record::odometry(t, step(0.001)));
            records.push(Record::marker(t, 1, detection()));
        }
        let kfs = keyframes(KeyframePolicy::default(), start(), &records).unwrap();
        let stamps: Vec<f64> = kfs.iter().map(|k| k.stamp).collect();
        for w in stamps.windows(2) {
            assert!(w[1] - w[0] > 0.25 - 1e-9);
        }
        assert!(kfs.iter().all(|k| k.detections.len() == 1));
    }

    #[test]
    fn out_of_order_is_rejected() {
        let mut fe = Frontend::new(KeyframePolicy::default(), start());
        fe.ingest(&Record::odometry(1.0, step(0.1))).unwrap();
        assert!(fe.ingest(&Record::odometry(0.5, step(0.1))).is_err());
    }

    #[test]
    fn keyframe_odometry_composes_to_dead_reckoning() {
        let records: Vec<_> = (1..=40)
            .map(|k| {
                let d =
                    Pose::new(UnitQuaternion::from_euler_angles(0.01, 0.0, 0.05), Vector3::new(0.03, 0.01, 0.0), R, R);
                Record::odometry(k as f64 * 0.1, d)
            })
            .collect();
        let kfs = keyframes(KeyframePolicy::default(), start(), &records).unwrap();
        let mut pose = kfs[0].pose;
        for kf in &kfs[1..] {
            pose = pose.compose(&kf.odometry.unwrap().delta).unwrap();
            assert!((pose.translation() - kf.pose.translation()).norm() < 1e-12);
        }
    }
}
