use serde::{Deserialize, Serialize};

use super::SlamError;
use crate::geometry::{FrameId, Pose};
use crate::sim::{NoiseModel, PoseJson};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KeyframePolicy {
    /// Meters travelled since the last keyframe.
    pub translation: f64,
    pub rotation_deg: f64,
    /// A detection promotes a keyframe when the last one is older than this.
    pub marker_gap: f64,
}

impl Default for KeyframePolicy {
    fn default() -> Self {
        Self { translation: 0.25, rotation_deg: 15.0, marker_gap: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopPolicy {
    pub min_elapsed: f64,
    pub min_distance: f64,
}

impl Default for LoopPolicy {
    fn default() -> Self {
        Self { min_elapsed: 20.0, min_distance: 10.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CullingPolicy {
    pub enabled: bool,
    /// Seconds before the newest keyframe.
    pub min_age: f64,
    /// Jaccard overlap of the neighbours' marker sets.
    pub min_overlap: f64,
}

impl Default for CullingPolicy {
    fn default() -> Self {
        Self { enabled: true, min_age: 30.0, min_overlap: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizerConfig {
    pub lambda0: f64,
    pub max_iterations: usize,
    pub rel_cost_tol: f64,
    pub step_tol: f64,
    /// Consecutive failed factorizations before giving up.
    pub max_escalations: usize,
    /// Consecutive rejected steps before stopping.
    pub max_rejections: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            lambda0: 1e-4,
            max_iterations: 100,
            rel_cost_tol: 1e-9,
            step_tol: 1e-10,
            max_escalations: 10,
            max_rejections: 10,
        }
    }
}

/// Standard deviations behind the diagonal information matrices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Sigmas {
    pub odom_t: f64,
    pub odom_r: f64,
    pub marker_t: f64,
    pub marker_r: f64,
    pub wall_t: f64,
    pub wall_r: f64,
    /// Lower bound applied to every sigma so zero-noise runs stay well posed.
    pub floor: f64,
}

impl Default for Sigmas {
    fn default() -> Self {
        Self::from_noise(&NoiseModel::default())
    }
}

impl Sigmas {
    pub fn from_noise(noise: &NoiseModel) -> Self {
        Self {
            odom_t: noise.odom_sigma_t,
            odom_r: noise.odom_sigma_r,
            marker_t: noise.marker_sigma_t,
            marker_r: noise.marker_sigma_r,
            wall_t: 0.01,
            wall_r: 0.01,
            floor: 1e-4,
        }
    }

    pub fn info(&self, sigma: f64) -> f64 {
        let s = sigma.max(self.floor);
        1.0 / (s * s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SlamConfig {
    pub keyframe: KeyframePolicy,
    pub loop_closure: LoopPolicy,
    pub culling: CullingPolicy,
    pub optimizer: OptimizerConfig,
    pub sigmas: Sigmas,
    pub place_factors: bool,
    /// Place factor information relative to the metric factors.
    pub place_weight: f64,
    pub corridor_parallel_deg: f64,
    /// Camera-to-robot transform `T_C^R`.
    pub extrinsic: PoseJson,
    /// Robot pose at the first record.
    pub initial_pose: PoseJson,
}

impl Default for SlamConfig {
    fn default() -> Self {
        let identity = PoseJson { t: [0.0; 3], q: [0.0, 0.0, 0.0, 1.0] };
        Self {
            keyframe: KeyframePolicy::default(),
            loop_closure: LoopPolicy::default(),
            culling: CullingPolicy::default(),
            optimizer: OptimizerConfig::default(),
            sigmas: Sigmas::default(),
            place_factors: true,
            place_weight: 0.01,
            corridor_parallel_deg: 5.0,
            extrinsic: identity.clone(),
            initial_pose: identity,
        }
    }
}

impl SlamConfig {
    pub fn extrinsic_pose(&self) -> Result<Pose, SlamError> {
        Ok(self.extrinsic.to_pose(FrameId::Camera, FrameId::Robot)?)
    }

    pub fn initial_pose(&self) -> Result<Pose, SlamError> {
        Ok(self.initial_pose.to_pose(FrameId::Robot, FrameId::World)?)
    }

    pub fn with_poses(mut self, extrinsic: &Pose, initial: &Pose) -> Self {
        let (t, q) = extrinsic.canonical_components();
        self.extrinsic = PoseJson { t, q };
        let (t, q) = initial.canonical_components();
        self.initial_pose = PoseJson { t, q };
        self
    }

    pub fn validate(&self) -> Result<(), SlamError> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        let k = &self.keyframe;
        if !(positive(k.translation) && positive(k.rotation_deg) && k.marker_gap >= 0.0) {
            return Err(SlamError::Config("keyframe thresholds must be positive".into()));
        }
        let s = &self.sigmas;
        let sigmas = [s.odom_t, s.odom_r, s.marker_t, s.marker_r, s.wall_t, s.wall_r];
        if !positive(s.floor) || sigmas.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
            return Err(SlamError::Config("sigmas must be finite and non-negative with a positive floor".into()));
        }
        let o = &self.optimizer;
        if !(positive(o.lambda0) && o.rel_cost_tol >= 0.0 && o.step_tol >= 0.0) {
            return Err(SlamError::Config("optimizer settings out of range".into()));
        }
        if !positive(self.place_weight) {
            return Err(SlamError::Config("place_weight must be positive".into()));
        }
        if !(self.corridor_parallel_deg > 0.0 && self.corridor_parallel_deg < 90.0) {
            return Err(SlamError::Config("corridor_parallel_deg must lie in (0, 90)".into()));
        }
        self.extrinsic_pose()?;
        self.initial_pose()?;
        Ok(())
    }
}
