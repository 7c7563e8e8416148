//! Rigid transforms between tagged reference frames.
//!
//! A [`Pose`] maps coordinates expressed in its `from` frame into its `to`
//! frame, so `T_R^G` is a pose with `from = Robot` and `to = World`. Composition
//! is only defined when the inner tags agree, which turns chains such as
//! `T_M^G = T_R^G * T_C^R * T_M^C` into checked operations.

pub mod lie;

use std::fmt;

use nalgebra::{Isometry3, Matrix4, Translation3, UnitQuaternion, Vector3, Vector6};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("frame mismatch: expected {expected}, got {found}")]
    FrameMismatch { expected: FrameId, found: FrameId },
    #[error("degenerate logarithm: rotation angle {angle} is too close to pi")]
    DegenerateLog { angle: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("invalid quaternion: norm {0}")]
    InvalidQuaternion(f64),
}

/// Reference frame tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FrameId {
    World,
    Robot,
    Camera,
    Marker(u32),
}

impl fmt::Display for FrameId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameId::World => write!(f, "G"),
            FrameId::Robot => write!(f, "R"),
            FrameId::Camera => write!(f, "C"),
            FrameId::Marker(id) => write!(f, "M{id}"),
        }
    }
}

/// Rigid transform mapping points in `from` into `to`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    iso: Isometry3<f64>,
    from: FrameId,
    to: FrameId,
}

impl Pose {
    pub fn new(rotation: UnitQuaternion<f64>, translation: Vector3<f64>, from: FrameId, to: FrameId) -> Self {
        Self::from_isometry(Isometry3::from_parts(Translation3::from(translation), rotation), from, to)
    }

    /// Wraps an isometry, renormalizing its quaternion.
    pub fn from_isometry(iso: Isometry3<f64>, from: FrameId, to: FrameId) -> Self {
        Self { iso: lie::renormalize(iso), from, to }
    }

    /// Builds a pose from raw `[qx, qy, qz, qw]` components.
    ///
    /// Quaternions within 1e-12 of unit norm are kept bit-exact so that
    /// serialized values read back unchanged; others are normalized.
    pub fn from_components(
        translation: [f64; 3],
        quaternion: [f64; 4],
        from: FrameId,
        to: FrameId,
    ) -> Result<Self, GeometryError> {
        if translation.iter().chain(quaternion.iter()).any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("pose components"));
        }
        let [x, y, z, w] = quaternion;
        let q = nalgebra::Quaternion::new(w, x, y, z);
        let norm = q.norm();
        if norm < 1e-6 {
            return Err(GeometryError::InvalidQuaternion(norm));
        }
        let rotation = if (norm - 1.0).abs() <= 1e-12 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::new_normalize(q)
        };
        Ok(Self { iso: Isometry3::from_parts(Translation3::from(Vector3::from(translation)), rotation), from, to })
    }

    pub fn identity(from: FrameId, to: FrameId) -> Self {
        Self { iso: Isometry3::identity(), from, to }
    }

    pub fn from_translation(t: Vector3<f64>, from: FrameId, to: FrameId) -> Self {
        Self::new(UnitQuaternion::identity(), t, from, to)
    }

    pub fn iso(&self) -> &Isometry3<f64> {
        &self.iso
    }

    pub fn rotation(&self) -> &UnitQuaternion<f64> {
        &self.iso.rotation
    }

    pub fn translation(&self) -> Vector3<f64> {
        self.iso.translation.vector
    }

    pub fn from_frame(&self) -> FrameId {
        self.from
    }

    pub fn to_frame(&self) -> FrameId {
        self.to
    }

    /// Same transform with different frame tags.
    pub fn retagged(&self, from: FrameId, to: FrameId) -> Self {
        Self { iso: self.iso, from, to }
    }

    /// Translation and `[qx, qy, qz, qw]` with `qw >= 0`.
    pub fn canonical_components(&self) -> ([f64; 3], [f64; 4]) {
        let t = self.iso.translation.vector;
        let q = self.iso.rotation.quaternion();
        let s = if q.w < 0.0 { -1.0 } else { 1.0 };
        ([t.x, t.y, t.z], [s * q.i, s * q.j, s * q.k, s * q.w])
    }

    pub fn to_homogeneous(&self) -> Matrix4<f64> {
        self.iso.to_homogeneous()
    }

    /// `self * other`; requires `self.from == other.to`.
    pub fn compose(&self, other: &Pose) -> Result<Pose, GeometryError> {
        if self.from != other.to {
            return Err(GeometryError::FrameMismatch { expected: self.from, found: other.to });
        }
        Ok(Pose::from_isometry(self.iso * other.iso, other.from, self.to))
    }

    pub fn inverse(&self) -> Pose {
        Pose::from_isometry(self.iso.inverse(), self.to, self.from)
    }

    pub fn transform_point(&self, p: &Point3) -> Result<Point3, GeometryError> {
        if p.frame != self.from {
            return Err(GeometryError::FrameMismatch { expected: self.from, found: p.frame });
        }
        Point3::new(self.iso.rotation * p.coords + self.iso.translation.vector, self.to)
    }

    /// Twist `[rho; phi]` with `exp_map(log_map(t)) == t`.
    pub fn log_map(&self) -> Result<Vector6<f64>, GeometryError> {
        lie::log_se3(&self.iso)
    }

    pub fn exp_map(xi: &Vector6<f64>, from: FrameId, to: FrameId) -> Pose {
        Pose::from_isometry(lie::exp_se3(xi), from, to)
    }

    /// Rotation angle of the relative transform, in radians.
    pub fn angle_to(&self, other: &Pose) -> f64 {
        self.iso.rotation.angle_to(&other.iso.rotation)
    }
}

/// Point with a frame tag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub coords: Vector3<f64>,
    pub frame: FrameId,
}

impl Point3 {
    pub fn new(coords: Vector3<f64>, frame: FrameId) -> Result<Self, GeometryError> {
        if coords.iter().any(|v| !v.is_finite()) {
            return Err(GeometryError::NonFinite("point coordinates"));
        }
        Ok(Self { coords, frame })
    }
}

/// `T_M^G = T_R^G * T_C^R * T_M^C`.
pub fn marker_world_pose(t_rg: &Pose, t_cr: &Pose, t_mc: &Pose) -> Result<Pose, GeometryError> {
    let expect = |p: &Pose, from: FrameId, to: FrameId| {
        if p.to != to {
            return Err(GeometryError::FrameMismatch { expected: to, found: p.to });
        }
        if p.from != from {
            return Err(GeometryError::FrameMismatch { expected: from, found: p.from });
        }
        Ok(())
    };
    expect(t_rg, FrameId::Robot, FrameId::World)?;
    expect(t_cr, FrameId::Camera, FrameId::Robot)?;
    if !matches!(t_mc.from, FrameId::Marker(_)) {
        return Err(GeometryError::FrameMismatch { expected: FrameId::Marker(0), found: t_mc.from });
    }
    t_rg.compose(t_cr)?.compose(t_mc)
}

/// Marker orientation in world coordinates from its outward normal: the
/// z-axis is the normal, the x-axis points down along the surface.
pub fn marker_rotation_from_normal(normal: &Vector3<f64>) -> Option<UnitQuaternion<f64>> {
    let z = normal.try_normalize(1e-12)?;
    let down = -Vector3::z();
    let x = (down - z * z.dot(&down)).try_normalize(1e-9)?;
    let y = z.cross(&x);
    let m = nalgebra::Matrix3::from_columns(&[x, y, z]);
    Some(UnitQuaternion::from_rotation_matrix(&nalgebra::Rotation3::from_matrix_unchecked(m)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    const G: FrameId = FrameId::World;
    const R: FrameId = FrameId::Robot;
    const C: FrameId = FrameId::Camera;

    fn yaw(angle: f64, t: Vector3<f64>, from: FrameId, to: FrameId) -> Pose {
        Pose::new(UnitQuaternion::from_euler_angles(0.0, 0.0, angle), t, from, to)
    }

    fn max_abs(m: Matrix4<f64>) -> f64 {
        m.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    #[test]
    fn compose_with_identity() {
        let t = yaw(0.3, Vector3::new(1.0, 2.0, 3.0), R, G);
        let id = Pose::identity(G, G);
        assert_eq!(id.compose(&t).unwrap().to_homogeneous(), t.to_homogeneous());
    }

    #[test]
    fn compose_two_quarter_turns() {
        // Oracle: product of the homogeneous matrices.
        let a = yaw(FRAC_PI_2, Vector3::new(1.0, 0.0, 0.0), R, R);
        let expected = a.to_homogeneous() * a.to_homogeneous();
        let c = a.compose(&a).unwrap();
        assert!(max_abs(c.to_homogeneous() - expected) < 1e-12);
        assert_relative_eq!(c.translation(), Vector3::new(1.0, 1.0, 0.0), epsilon = 1e-12);
        assert_relative_eq!(c.rotation().angle(), std::f64::consts::PI, epsilon = 1e-12);
    }

    #[test]
    fn compose_rejects_mismatched_frames() {
        let a = Pose::identity(R, G);
        let b = Pose::identity(G, C);
        assert!(matches!(a.compose(&b), Err(GeometryError::FrameMismatch { .. })));
    }

    #[test]
    fn inverse_of_translation() {
        let t = Pose::from_translation(Vector3::new(1.0, 2.0, 3.0), R, G);
        let inv = t.inverse();
        assert_eq!(inv.translation(), Vector3::new(-1.0, -2.0, -3.0));
        assert_eq!((inv.from_frame(), inv.to_frame()), (G, R));
        let id = Pose::identity(R, R).inverse();
        assert_eq!(id.to_homogeneous(), Matrix4::identity());
    }

    #[test]
    fn transform_point_quarter_turn() {
        let t = yaw(FRAC_PI_2, Vector3::zeros(), R, G);
        let p = Point3::new(Vector3::new(1.0, 0.0, 0.0), R).unwrap();
        let q = t.transform_point(&p).unwrap();
        assert_relative_eq!(q.coords, Vector3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
        assert_eq!(q.frame, G);
        let id = Pose::identity(R, G);
        let p = Point3::new(Vector3::new(1.0, 2.0, 3.0), R).unwrap();
        assert_eq!(id.transform_point(&p).unwrap().coords, p.coords);
        let wrong = Point3::new(Vector3::zeros(), C).unwrap();
        assert!(t.transform_point(&wrong).is_err());
    }

    #[test]
    fn point_rejects_nan() {
        assert!(Point3::new(Vector3::new(f64::NAN, 0.0, 0.0), G).is_err());
    }

    #[test]
    fn marker_chain_translations_add() {
        let m = FrameId::Marker(7);
        let rg = Pose::from_translation(Vector3::new(0.0, 0.0, 1.0), R, G);
        let cr = Pose::from_translation(Vector3::new(0.0, 0.0, 0.1), C, R);
        let mc = Pose::from_translation(Vector3::new(0.0, 0.0, 2.0), m, C);
        let mg = marker_world_pose(&rg, &cr, &mc).unwrap();
        assert_relative_eq!(mg.translation(), Vector3::new(0.0, 0.0, 3.1), epsilon = 1e-15);
        assert_eq!((mg.from_frame(), mg.to_frame()), (m, G));
        let ids = marker_world_pose(&Pose::identity(R, G), &Pose::identity(C, R), &Pose::identity(m, C)).unwrap();
        assert_eq!(ids.to_homogeneous(), Matrix4::identity());
        assert!(marker_world_pose(&cr, &rg, &mc).is_err());
    }

    #[test]
    fn log_of_translation_and_identity() {
        let t = Pose::from_translation(Vector3::new(0.5, -1.0, 2.0), R, R);
        let xi = t.log_map().unwrap();
        assert_eq!(xi, Vector6::new(0.5, -1.0, 2.0, 0.0, 0.0, 0.0));
        assert_eq!(Pose::identity(R, R).log_map().unwrap(), Vector6::zeros());
    }

    #[test]
    fn canonical_components_flip_sign() {
        let q = nalgebra::Quaternion::new(-0.5, 0.5, 0.5, 0.5);
        let p = Pose::new(UnitQuaternion::new_unchecked(q), Vector3::zeros(), R, G);
        let (_, c) = p.canonical_components();
        assert_eq!(c, [-0.5, -0.5, -0.5, 0.5]);
    }

    #[test]
    fn marker_rotation_axes() {
        let q = marker_rotation_from_normal(&Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let r = q.to_rotation_matrix();
        assert_relative_eq!(r * Vector3::z(), Vector3::x(), epsilon = 1e-15);
        assert_relative_eq!(r * Vector3::x(), -Vector3::z(), epsilon = 1e-15);
        assert!(marker_rotation_from_normal(&Vector3::z()).is_none());
    }

    fn arb_vec(scale: f64) -> impl Strategy<Value = Vector3<f64>> {
        (-scale..scale, -scale..scale, -scale..scale).prop_map(|(a, b, c)| Vector3::new(a, b, c))
    }

    fn arb_pose(from: FrameId, to: FrameId) -> impl Strategy<Value = Pose> {
        (arb_vec(5.0), arb_vec(3.0)).prop_map(move |(t, r)| Pose::new(UnitQuaternion::from_scaled_axis(r), t, from, to))
    }

    proptest! {
        #[test]
        fn inverse_composes_to_identity(p in arb_pose(R, G)) {
            let e = p.compose(&p.inverse()).unwrap();
            prop_assert!(max_abs(e.to_homogeneous() - Matrix4::identity()) <= 1e-12);
            let inv = p.inverse().to_homogeneous();
            let oracle = p.to_homogeneous().try_inverse().unwrap();
            prop_assert!(max_abs(inv - oracle) <= 1e-12);
        }

        #[test]
        fn composition_is_associative(a in arb_pose(C, G), b in arb_pose(R, C), c in arb_pose(G, R)) {
            let l = a.compose(&b).unwrap().compose(&c).unwrap();
            let r = a.compose(&b.compose(&c).unwrap()).unwrap();
            prop_assert!(max_abs(l.to_homogeneous() - r.to_homogeneous()) <= 1e-12);
            prop_assert!((l.rotation().quaternion().norm() - 1.0).abs() <= 1e-9);
        }

        #[test]
        fn compose_matches_matrix_product(a in arb_pose(R, G), b in arb_pose(C, R)) {
            let c = a.compose(&b).unwrap();
            let oracle = a.to_homogeneous() * b.to_homogeneous();
            prop_assert!(max_abs(c.to_homogeneous() - oracle) <= 1e-12);
        }

        #[test]
        fn point_transform_matches_homogeneous(t in arb_pose(R, G), p in arb_vec(4.0)) {
            let q = t.transform_point(&Point3::new(p, R).unwrap()).unwrap();
            let h = t.to_homogeneous() * nalgebra::Vector4::new(p.x, p.y, p.z, 1.0);
            prop_assert!((q.coords - h.xyz()).amax() <= 1e-12);
        }

        #[test]
        fn point_transform_distributes(a in arb_pose(C, G), b in arb_pose(R, C), p in arb_vec(4.0)) {
            let p = Point3::new(p, R).unwrap();
            let lhs = a.compose(&b).unwrap().transform_point(&p).unwrap();
            let rhs = a.transform_point(&b.transform_point(&p).unwrap()).unwrap();
            prop_assert!((lhs.coords - rhs.coords).amax() <= 1e-12);
        }

        #[test]
        fn marker_chain_equals_composition(rg in arb_pose(R, G), cr in arb_pose(C, R), mc in arb_pose(FrameId::Marker(3), C)) {
            let direct = marker_world_pose(&rg, &cr, &mc).unwrap();
            let oracle = rg.compose(&cr).unwrap().compose(&mc).unwrap();
            prop_assert!(max_abs(direct.to_homogeneous() - oracle.to_homogeneous()) <= 1e-12);
        }

        #[test]
        fn log_exp_round_trip(rho in arb_vec(3.0), phi in arb_vec(1.7)) {
            let mut xi = Vector6::zeros();
            xi.fixed_rows_mut::<3>(0).copy_from(&rho);
            xi.fixed_rows_mut::<3>(3).copy_from(&phi);
            let p = Pose::exp_map(&xi, R, R);
            let back = p.log_map().unwrap();
            prop_assert!((back - xi).norm() <= 1e-9);
            let again = Pose::exp_map(&back, R, R);
            prop_assert!(max_abs(again.to_homogeneous() - p.to_homogeneous()) <= 1e-9);
        }
    }
}
