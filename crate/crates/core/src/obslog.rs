//! Observation stream consumed by the SLAM front-end, with its JSON Lines
//! encoding.
//!
//! ```text
//! {"t":0.1,"type":"odom","dt":[x,y,z],"dq":[qx,qy,qz,qw]}
//! {"t":0.1,"type":"marker","id":101,"t_mc":[x,y,z],"q_mc":[qx,qy,qz,qw]}
//! ```
//!
//! Lines starting with `#` carry provenance headers and are skipped on read.
//! Odometry records have strictly increasing stamps. Marker records share
//! the stamp of the frame they were detected in and refer to the robot pose
//! after the odometry record with the same stamp, if any.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{FrameId, GeometryError, Pose};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LogError {
    #[error("record {index}: timestamp {t} precedes {prev}")]
    OutOfOrder { index: usize, t: f64, prev: f64 },
    #[error("record {index}: odometry timestamp {t} is not after previous odometry at {prev}")]
    DuplicateOdometry { index: usize, t: f64, prev: f64 },
    #[error("record {index}: non-finite timestamp")]
    NonFiniteStamp { index: usize },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Payload {
    /// Relative motion `R_i -> R_{i+1}`, expressed as the pose of the new
    /// robot frame in the previous one.
    Odometry(Pose),
    /// Marker pose in the camera frame, `T_M^C`.
    Marker { id: u32, pose: Pose },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Record {
    pub t: f64,
    pub payload: Payload,
}

impl Record {
    pub fn odometry(t: f64, delta: Pose) -> Self {
        Self { t, payload: Payload::Odometry(delta) }
    }

    pub fn marker(t: f64, id: u32, t_mc: Pose) -> Self {
        Self { t, payload: Payload::Marker { id, pose: t_mc } }
    }
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum Line {
    Odom { t: f64, dt: [f64; 3], dq: [f64; 4] },
    Marker { t: f64, id: u32, t_mc: [f64; 3], q_mc: [f64; 4] },
}

#[derive(Serialize)]
struct OdomOut {
    t: f64,
    #[serde(rename = "type")]
    kind: &'static str,
    dt: [f64; 3],
    dq: [f64; 4],
}

#[derive(Serialize)]
struct MarkerOut {
    t: f64,
    #[serde(rename = "type")]
    kind: &'static str,
    id: u32,
    t_mc: [f64; 3],
    q_mc: [f64; 4],
}

/// Checks the ordering rules shared by the log and the front-end.
#[derive(Debug, Default, Clone)]
pub struct OrderCheck {
    last: Option<f64>,
    last_odom: Option<f64>,
    count: usize,
}

impl OrderCheck {
    pub fn check(&mut self, record: &Record) -> Result<(), LogError> {
        let index = self.count;
        if !record.t.is_finite() {
            return Err(LogError::NonFiniteStamp { index });
        }
        if let Some(prev) = self.last {
            if record.t < prev {
                return Err(LogError::OutOfOrder { index, t: record.t, prev });
            }
        }
        if let Payload::Odometry(_) = record.payload {
            if let Some(prev) = self.last_odom {
                if record.t <= prev {
                    return Err(LogError::DuplicateOdometry { index, t: record.t, prev });
                }
            }
            self.last_odom = Some(record.t);
        }
        self.last = Some(record.t);
        self.count += 1;
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ObservationLog {
    records: Vec<Record>,
}

impl ObservationLog {
    pub fn new(records: Vec<Record>) -> Result<Self, LogError> {
        let mut check = OrderCheck::default();
        for r in &records {
            check.check(r)?;
        }
        Ok(Self { records })
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn marker_ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.records.iter().filter_map(|r| match r.payload {
            Payload::Marker { id, .. } => Some(id),
            Payload::Odometry(_) => None,
        })
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            let line = match r.payload {
                Payload::Odometry(p) => {
                    let (dt, dq) = p.canonical_components();
                    serde_json::to_string(&OdomOut { t: r.t, kind: "odom", dt, dq })
                }
                Payload::Marker { id, pose } => {
                    let (t_mc, q_mc) = pose.canonical_components();
                    serde_json::to_string(&MarkerOut { t: r.t, kind: "marker", id, t_mc, q_mc })
                }
            };
            out.push_str(&line.expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self, LogError> {
        let mut records = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse_err = |message: String| LogError::Parse { line: idx + 1, message };
            let parsed: Line = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
            let record = match parsed {
                Line::Odom { t, dt, dq } => {
                    let p = Pose::from_components(dt, dq, FrameId::Robot, FrameId::Robot)
                        .map_err(|e| parse_err(e.to_string()))?;
                    Record::odometry(t, p)
                }
                Line::Marker { t, id, t_mc, q_mc } => {
                    let p = Pose::from_components(t_mc, q_mc, FrameId::Marker(id), FrameId::Camera)
                        .map_err(|e| parse_err(e.to_string()))?;
                    Record::marker(t, id, p)
                }
            };
            records.push(record);
        }
        ObservationLog::new(records)
    }
}
