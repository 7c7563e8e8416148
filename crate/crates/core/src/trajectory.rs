//! Timestamped robot trajectories and the TUM text format.
//!
//! A TUM line is `timestamp tx ty tz qx qy qz qw`; blank lines and lines
//! starting with `#` are ignored.

use std::fmt::Write as _;

use thiserror::Error;

use crate::geometry::{FrameId, GeometryError, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("timestamps must be strictly increasing: {prev} then {next}")]
    NonIncreasing { prev: f64, next: f64 },
    #[error("pose at t={0} must map robot to world")]
    WrongFrames(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StampedPose {
    pub t: f64,
    /// Robot-to-world pose.
    pub pose: Pose,
}

/// Robot-to-world poses with strictly increasing timestamps.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    samples: Vec<StampedPose>,
}

impl Trajectory {
    pub fn new(samples: Vec<StampedPose>) -> Result<Self, TrajectoryError> {
        for s in &samples {
            if s.pose.from_frame() != FrameId::Robot || s.pose.to_frame() != FrameId::World {
                return Err(TrajectoryError::WrongFrames(s.t));
            }
        }
        for w in samples.windows(2) {
            if !(w[1].t > w[0].t) {
                return Err(TrajectoryError::NonIncreasing { prev: w[0].t, next: w[1].t });
            }
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[StampedPose] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn stamps(&self) -> impl Iterator<Item = f64> + '_ {
        self.samples.iter().map(|s| s.t)
    }

    /// Length of the polyline through the sample positions.
    pub fn path_length(&self) -> f64 {
        self.samples.windows(2).map(|w| (w[1].pose.translation() - w[0].pose.translation()).norm()).sum()
    }

    pub fn to_tum(&self) -> String {
        let mut out = String::new();
        for s in &self.samples {
            out.push_str(&tum_line(s.t, &s.pose));
            out.push('\n');
        }
        out
    }

    pub fn from_tum(text: &str) -> Result<Self, TrajectoryError> {
        let mut samples = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| TrajectoryError::Parse { line: idx + 1, message };
            let values = line
                .split_whitespace()
                .map(|tok| tok.parse::<f64>().map_err(|e| parse_err(format!("{tok:?}: {e}"))))
                .collect::<Result<Vec<_>, _>>()?;
            if values.len() != 8 {
                return Err(parse_err(format!("expected 8 fields, found {}", values.len())));
            }
            let pose = Pose::from_components(
                [values[1], values[2], values[3]],
                [values[4], values[5], values[6], values[7]],
                FrameId::Robot,
                FrameId::World,
            )
            .map_err(|e| parse_err(e.to_string()))?;
            samples.push(StampedPose { t: values[0], pose });
        }
        Trajectory::new(samples)
    }
}

/// Timestamp text: six decimals when that is exact, otherwise the shortest
/// representation that reads back to the same value.
pub fn format_stamp(t: f64) -> String {
    let short = format!("{t}");
    let decimals = short.split_once('.').map_or(0, |(_, frac)| frac.len());
    if decimals <= 6 {
        format!("{t:.6}")
    } else {
        short
    }
}

pub fn tum_line(t: f64, pose: &Pose) -> String {
    let (tr, q) = pose.canonical_components();
    let mut line = format_stamp(t);
    for v in tr.iter().chain(q.iter()) {
        // Normalize -0 so the output does not depend on rounding direction.
        let v = if *v == 0.0 { 0.0 } else { *v };
        let _ = write!(line, " {v}");
    }
    line
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{UnitQuaternion, Vector3};
    use proptest::prelude::*;

    fn sample(t: f64, x: f64) -> StampedPose {
        StampedPose { t, pose: Pose::from_translation(Vector3::new(x, 0.0, 0.0), FrameId::Robot, FrameId::World) }
    }

    #[test]
    fn identity_line() {
        let pose = Pose::identity(FrameId::Robot, FrameId::World);
        assert_eq!(tum_line(0.0, &pose), "0.000000 0 0 0 0 0 0 1");
    }

    #[test]
    fn empty_trajectory_is_empty_text() {
        assert_eq!(Trajectory::default().to_tum(), "");
        assert!(Trajectory::from_tum("# header only\n\n").unwrap().is_empty());
    }

    #[test]
    fn stamps_keep_full_precision() {
        assert_eq!(format_stamp(0.5), "0.500000");
        let t = 1.0 / 30.0;
        assert_eq!(format_stamp(t).parse::<f64>().unwrap(), t);
    }

    #[test]
    fn rejects_non_increasing() {
        let err = Trajectory::new(vec![sample(1.0, 0.0), sample(1.0, 1.0)]).unwrap_err();
        assert!(matches!(err, TrajectoryError::NonIncreasing { .. }));
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = Trajectory::from_tum("# c\n0 1 2 3\n").unwrap_err();
        assert!(matches!(err, TrajectoryError::Parse { line: 2, .. }));
        let err = Trajectory::from_tum("0 0 0 0 0 0 0 x\n").unwrap_err();
        assert!(matches!(err, TrajectoryError::Parse { line: 1, .. }));
    }

    #[test]
    fn path_length_sums_segments() {
        let t = Trajectory::new(vec![sample(0.0, 0.0), sample(1.0, 1.0), sample(2.0, 3.0)]).unwrap();
        assert_eq!(t.path_length(), 3.0);
    }

    proptest! {
        #[test]
        fn tum_round_trip(raw in prop::collection::vec(
            (0.001f64..2.0, -50.0f64..50.0, -50.0f64..50.0, -5.0f64..5.0, -3.0f64..3.0, -3.0f64..3.0, -3.0f64..3.0),
            0..20,
        )) {
            let mut t = 0.0;
            let samples: Vec<_> = raw.iter().map(|&(dt, x, y, z, a, b, c)| {
                t += dt;
                let q = UnitQuaternion::from_scaled_axis(Vector3::new(a, b, c) * 0.5);
                StampedPose { t, pose: Pose::new(q, Vector3::new(x, y, z), FrameId::Robot, FrameId::World) }
            }).collect();
            let traj = Trajectory::new(samples).unwrap();
            let back = Trajectory::from_tum(&traj.to_tum()).unwrap();
            prop_assert_eq!(back.len(), traj.len());
            for (a, b) in traj.samples().iter().zip(back.samples()) {
                prop_assert_eq!(a.t, b.t);
                prop_assert!((a.pose.translation() - b.pose.translation()).amax() <= 1e-9);
                prop_assert!(a.pose.angle_to(&b.pose) <= 1e-9);
            }
        }
    }
}
