//! Graph state and factors. SE(3) nodes are perturbed on the right,
//! `T * exp(delta)`, with twists ordered `[rho; phi]`. Walls carry a 3-DOF
//! update: two tangent directions of the normal plus the offset.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3, Vector4, Vector6};

use super::SlamError;
use crate::geometry::lie::{adjoint, retract, se3_right_jacobian_inv, skew};
use crate::geometry::{FrameId, Pose};
use crate::semantic::PlaceKind;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyframeNode {
    pub id: usize,
    pub stamp: f64,
    /// `T_R^G`.
    pub pose: Pose,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MarkerNode {
    pub id: u32,
    /// `T_M^G`.
    pub pose: Pose,
    pub first_seen: f64,
    pub last_seen: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WallNode {
    pub id: String,
    pub normal: Vector3<f64>,
    pub offset: f64,
    /// Centroid of the attached marker centers.
    pub anchor: Vector3<f64>,
    pub markers: Vec<u32>,
}

impl WallNode {
    pub fn distance(&self, p: &Vector3<f64>) -> f64 {
        self.normal.dot(p) + self.offset
    }

    /// The stored anchor projected onto the current plane.
    pub fn projected_anchor(&self) -> Vector3<f64> {
        self.anchor - self.normal * self.distance(&self.anchor)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoorNode {
    pub id: String,
    pub pose: Pose,
    pub markers: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlaceNode {
    pub id: String,
    pub kind: PlaceKind,
    pub center: Vector3<f64>,
    /// Corridor direction, horizontal.
    pub axis: Option<Vector3<f64>>,
    pub walls: Vec<String>,
}

/// Orthonormal tangent basis of a unit normal, a fixed function of `n`.
pub fn tangent_basis(n: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let a = if n.x.abs() < 0.9 { Vector3::x() } else { Vector3::y() };
    let e1 = n.cross(&a).normalize();
    let e2 = n.cross(&e1);
    (e1, e2)
}

#[derive(Debug, Clone, PartialEq)]
pub enum Factor {
    /// Relative motion between keyframes, composed from `steps` increments.
    Odometry {
        from: usize,
        to: usize,
        meas: Pose,
        steps: usize,
        info: Vector6<f64>,
    },
    MarkerObs {
        kf: usize,
        marker: u32,
        meas: Pose,
        info: Vector6<f64>,
    },
    /// A marker re-observation after a long absence.
    LoopClosure {
        kf: usize,
        marker: u32,
        meas: Pose,
        info: Vector6<f64>,
    },
    /// `sign` is +1 when the marker z-axis agrees with the wall normal.
    MarkerOnWall {
        marker: u32,
        wall: usize,
        sign: f64,
        info: Vector4<f64>,
    },
    Place {
        place: usize,
        walls: Vec<usize>,
        info: Vector3<f64>,
    },
}

impl Factor {
    pub fn dim(&self) -> usize {
        match self {
            Factor::Odometry { .. } | Factor::MarkerObs { .. } | Factor::LoopClosure { .. } => 6,
            Factor::MarkerOnWall { .. } => 4,
            Factor::Place { .. } => 3,
        }
    }

    pub fn info_diagonal(&self) -> DVector<f64> {
        match self {
            Factor::Odometry { info, .. } | Factor::MarkerObs { info, .. } | Factor::LoopClosure { info, .. } => {
                DVector::from_column_slice(info.as_slice())
            }
            Factor::MarkerOnWall { info, .. } => DVector::from_column_slice(info.as_slice()),
            Factor::Place { info, .. } => DVector::from_column_slice(info.as_slice()),
        }
    }

    pub fn information(&self) -> DMatrix<f64> {
        DMatrix::from_diagonal(&self.info_diagonal())
    }

    /// Variables the factor touches.
    pub fn vars(&self) -> Vec<VarRef> {
        match self {
            Factor::Odometry { from, to, .. } => vec![VarRef::Keyframe(*from), VarRef::Keyframe(*to)],
            Factor::MarkerObs { kf, marker, .. } | Factor::LoopClosure { kf, marker, .. } => {
                vec![VarRef::Keyframe(*kf), VarRef::Marker(*marker)]
            }
            Factor::MarkerOnWall { marker, wall, .. } => vec![VarRef::Marker(*marker), VarRef::Wall(*wall)],
            Factor::Place { place, walls, .. } => {
                std::iter::once(VarRef::Place(*place)).chain(walls.iter().map(|w| VarRef::Wall(*w))).collect()
            }
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Factor::Odometry { .. } => "odometry",
            Factor::MarkerObs { .. } => "marker_obs",
            Factor::LoopClosure { .. } => "loop_closure",
            Factor::MarkerOnWall { .. } => "marker_on_wall",
            Factor::Place { .. } => "place",
        }
    }
}

/// Handle to an optimization variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum VarRef {
    Keyframe(usize),
    Marker(u32),
    Wall(usize),
    Place(usize),
}

impl VarRef {
    pub fn dim(self) -> usize {
        match self {
            VarRef::Keyframe(_) | VarRef::Marker(_) => 6,
            VarRef::Wall(_) | VarRef::Place(_) => 3,
        }
    }
}

/// Residual and Jacobian blocks of one factor at the current state.
#[derive(Debug, Clone)]
pub struct Linearization {
    pub residual: DVector<f64>,
    pub blocks: Vec<(VarRef, DMatrix<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    pub extrinsic: Pose,
    pub keyframes: Vec<KeyframeNode>,
    /// Sorted by id.
    pub markers: Vec<MarkerNode>,
    /// Sorted by id.
    pub walls: Vec<WallNode>,
    pub doors: Vec<DoorNode>,
    /// Sorted by id.
    pub places: Vec<PlaceNode>,
    pub factors: Vec<Factor>,
}

fn to_dmatrix<const R: usize, const C: usize>(m: &nalgebra::SMatrix<f64, R, C>) -> DMatrix<f64> {
    DMatrix::from_column_slice(R, C, m.as_slice())
}

impl Graph {
    pub fn new(extrinsic: Pose) -> Self {
        Self {
            extrinsic,
            keyframes: Vec::new(),
            markers: Vec::new(),
            walls: Vec::new(),
            doors: Vec::new(),
            places: Vec::new(),
            factors: Vec::new(),
        }
    }

    pub fn marker_index(&self, id: u32) -> Option<usize> {
        self.markers.binary_search_by_key(&id, |m| m.id).ok()
    }

    pub fn marker(&self, id: u32) -> Result<&MarkerNode, SlamError> {
        self.marker_index(id).map(|i| &self.markers[i]).ok_or(SlamError::UnknownNode(format!("marker {id}")))
    }

    pub fn wall_index(&self, id: &str) -> Option<usize> {
        self.walls.binary_search_by(|w| w.id.as_str().cmp(id)).ok()
    }

    pub fn place_index(&self, id: &str) -> Option<usize> {
        self.places.binary_search_by(|p| p.id.as_str().cmp(id)).ok()
    }

    /// Inserts a marker keeping id order. Fails if it already exists.
    pub fn insert_marker(&mut self, node: MarkerNode) -> Result<(), SlamError> {
        match self.markers.binary_search_by_key(&node.id, |m| m.id) {
            Ok(_) => Err(SlamError::DuplicateMarker(node.id)),
            Err(pos) => {
                self.markers.insert(pos, node);
                Ok(())
            }
        }
    }

    fn kf(&self, i: usize) -> Result<&KeyframeNode, SlamError> {
        self.keyframes.get(i).ok_or(SlamError::UnknownNode(format!("keyframe {i}")))
    }

    fn wall(&self, i: usize) -> Result<&WallNode, SlamError> {
        self.walls.get(i).ok_or(SlamError::UnknownNode(format!("wall #{i}")))
    }

    fn place(&self, i: usize) -> Result<&PlaceNode, SlamError> {
        self.places.get(i).ok_or(SlamError::UnknownNode(format!("place #{i}")))
    }

    pub fn residual(&self, factor: &Factor) -> Result<DVector<f64>, SlamError> {
        Ok(self.linearize_impl(factor, false)?.residual)
    }

    pub fn linearize(&self, factor: &Factor) -> Result<Linearization, SlamError> {
        self.linearize_impl(factor, true)
    }

    /// Weighted squared residual `r^T Omega r`.
    pub fn factor_cost(&self, factor: &Factor) -> Result<f64, SlamError> {
        let r = self.residual(factor)?;
        Ok(r.component_mul(&r).dot(&factor.info_diagonal()))
    }

    pub fn cost(&self) -> Result<f64, SlamError> {
        self.factors.iter().map(|f| self.factor_cost(f)).sum()
    }

    fn linearize_impl(&self, factor: &Factor, jacobians: bool) -> Result<Linearization, SlamError> {
        let mut blocks = Vec::new();
        let residual = match factor {
            Factor::Odometry { from, to, meas, .. } => {
                let a = self.kf(*from)?.pose.iso();
                let b = self.kf(*to)?.pose.iso();
                let e = meas.iso().inverse() * a.inverse() * b;
                let r = crate::geometry::lie::log_se3(&e)?;
                if jacobians {
                    let jr = se3_right_jacobian_inv(&r);
                    blocks.push((VarRef::Keyframe(*from), to_dmatrix(&(-jr * adjoint(&(b.inverse() * a))))));
                    blocks.push((VarRef::Keyframe(*to), to_dmatrix(&jr)));
                }
                DVector::from_column_slice(r.as_slice())
            }
            Factor::MarkerObs { kf, marker, meas, .. } | Factor::LoopClosure { kf, marker, meas, .. } => {
                let x = self.kf(*kf)?.pose.iso();
                let m = self.marker(*marker)?.pose.iso();
                let tc = self.extrinsic.iso();
                let e = meas.iso().inverse() * tc.inverse() * x.inverse() * m;
                let r = crate::geometry::lie::log_se3(&e)?;
                if jacobians {
                    let jr = se3_right_jacobian_inv(&r);
                    blocks.push((VarRef::Keyframe(*kf), to_dmatrix(&(-jr * adjoint(&(m.inverse() * x))))));
                    blocks.push((VarRef::Marker(*marker), to_dmatrix(&jr)));
                }
                DVector::from_column_slice(r.as_slice())
            }
            Factor::MarkerOnWall { marker, wall, sign, .. } => {
                let mk = self.marker(*marker)?;
                let w = self.wall(*wall)?;
                let rot = mk.pose.rotation().to_rotation_matrix().into_inner();
                let c = mk.pose.translation();
                let (xm, ym, zm) = (rot.column(0).into_owned(), rot.column(1).into_owned(), rot.column(2).into_owned());
                let n = w.normal;
                let r = Vector4::new(n.dot(&c) + w.offset, 1.0 - sign * n.dot(&zm), n.dot(&xm), n.dot(&ym));
                if jacobians {
                    // Marker: c' = c + R rho, axis a' = R exp(phi) e ~ a - R [e]x phi.
                    let nt_r = n.transpose() * rot;
                    let axis_row = |e: Vector3<f64>| -(nt_r * skew(&e));
                    let mut jm = nalgebra::Matrix4x6::zeros();
                    jm.fixed_view_mut::<1, 3>(0, 0).copy_from(&nt_r);
                    jm.fixed_view_mut::<1, 3>(1, 3).copy_from(&(-axis_row(Vector3::z()) * *sign));
                    jm.fixed_view_mut::<1, 3>(2, 3).copy_from(&axis_row(Vector3::x()));
                    jm.fixed_view_mut::<1, 3>(3, 3).copy_from(&axis_row(Vector3::y()));
                    let (e1, e2) = tangent_basis(&n);
                    let jw = nalgebra::Matrix4x3::new(
                        e1.dot(&c),
                        e2.dot(&c),
                        1.0,
                        -sign * e1.dot(&zm),
                        -sign * e2.dot(&zm),
                        0.0,
                        e1.dot(&xm),
                        e2.dot(&xm),
                        0.0,
                        e1.dot(&ym),
                        e2.dot(&ym),
                        0.0,
                    );
                    blocks.push((VarRef::Marker(*marker), to_dmatrix(&jm)));
                    blocks.push((VarRef::Wall(*wall), to_dmatrix(&jw)));
                }
                DVector::from_column_slice(r.as_slice())
            }
            Factor::Place { place, walls, .. } => {
                let p = self.place(*place)?;
                if walls.is_empty() {
                    return Err(SlamError::UnknownNode(format!("place {} has no walls", p.id)));
                }
                let k = walls.len() as f64;
                let mut mean = Vector3::zeros();
                for &wi in walls {
                    mean += self.wall(wi)?.projected_anchor();
                }
                mean /= k;
                let r = Vector3::new(p.center.x - mean.x, p.center.y - mean.y, p.center.z);
                if jacobians {
                    blocks.push((VarRef::Place(*place), to_dmatrix(&Matrix3::<f64>::identity())));
                    for &wi in walls {
                        let w = self.wall(wi)?;
                        let (e1, e2) = tangent_basis(&w.normal);
                        let p0 = w.anchor;
                        let dist = w.distance(&p0);
                        // anchor = p0 - (n.p0 + d) n
                        let da = -(w.normal * e1.dot(&p0) + e1 * dist);
                        let db = -(w.normal * e2.dot(&p0) + e2 * dist);
                        let dd = -w.normal;
                        let mut jw = Matrix3::zeros();
                        for (col, v) in [da, db, dd].iter().enumerate() {
                            jw[(0, col)] = -v.x / k;
                            jw[(1, col)] = -v.y / k;
                        }
                        blocks.push((VarRef::Wall(wi), to_dmatrix(&jw)));
                    }
                }
                DVector::from_column_slice(r.as_slice())
            }
        };
        Ok(Linearization { residual, blocks })
    }

    /// Applies a tangent-space update to one variable.
    pub fn retract(&mut self, var: VarRef, delta: &[f64]) {
        match var {
            VarRef::Keyframe(i) => {
                let kf = &mut self.keyframes[i];
                let d = Vector6::from_column_slice(delta);
                kf.pose = Pose::from_isometry(retract(kf.pose.iso(), &d), FrameId::Robot, FrameId::World);
            }
            VarRef::Marker(id) => {
                let i = self.marker_index(id).expect("marker variable exists");
                let m = &mut self.markers[i];
                let d = Vector6::from_column_slice(delta);
                m.pose = Pose::from_isometry(retract(m.pose.iso(), &d), FrameId::Marker(id), FrameId::World);
            }
            VarRef::Wall(i) => {
                let w = &mut self.walls[i];
                let (e1, e2) = tangent_basis(&w.normal);
                w.normal = (w.normal + e1 * delta[0] + e2 * delta[1]).normalize();
                w.offset += delta[2];
            }
            VarRef::Place(i) => {
                let p = &mut self.places[i];
                p.center += Vector3::new(delta[0], delta[1], delta[2]);
            }
        }
    }

    /// Central finite-difference Jacobians in the same parameterization as
    /// [`Graph::linearize`], for verification.
    pub fn numeric_jacobians(&self, factor: &Factor, h: f64) -> Result<Vec<(VarRef, DMatrix<f64>)>, SlamError> {
        let analytic = self.linearize(factor)?;
        let mut out = Vec::new();
        for (var, _) in &analytic.blocks {
            let dim = var.dim();
            let mut j = DMatrix::zeros(factor.dim(), dim);
            for k in 0..dim {
                let mut delta = vec![0.0; dim];
                delta[k] = h;
                let mut plus = self.clone();
                plus.retract(*var, &delta);
                delta[k] = -h;
                let mut minus = self.clone();
                minus.retract(*var, &delta);
                let col = (plus.residual(factor)? - minus.residual(factor)?) / (2.0 * h);
                j.set_column(k, &col);
            }
            out.push((*var, j));
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_pose(rng: &mut ChaCha8Rng, from: FrameId, to: FrameId) -> Pose {
        let t = Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let r = Vector3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        Pose::new(UnitQuaternion::from_scaled_axis(r), t, from, to)
    }

    fn small_noise(rng: &mut ChaCha8Rng, scale: f64) -> Vector6<f64> {
        Vector6::from_fn(|_, _| rng.random_range(-scale..scale))
    }

    fn random_graph(rng: &mut ChaCha8Rng) -> Graph {
        let mut g = Graph::new(random_pose(rng, FrameId::Camera, FrameId::Robot));
        for i in 0..2 {
            g.keyframes.push(KeyframeNode {
                id: i,
                stamp: i as f64,
                pose: random_pose(rng, FrameId::Robot, FrameId::World),
            });
        }
        let n = Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-0.3..0.3))
            .normalize();
        let mut walls = Vec::new();
        for (k, id) in ["W1", "W2"].iter().enumerate() {
            let normal = if k == 0 { n } else { -n };
            let anchor =
                Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(0.0..2.0));
            walls.push(WallNode {
                id: id.to_string(),
                normal,
                offset: rng.random_range(-3.0..3.0),
                anchor,
                markers: vec![7],
            });
        }
        g.walls = walls;
        g.insert_marker(MarkerNode {
            id: 7,
            pose: random_pose(rng, FrameId::Marker(7), FrameId::World),
            first_seen: 0.0,
            last_seen: 0.0,
        })
        .unwrap();
        g.places.push(PlaceNode {
            id: "C1".into(),
            kind: PlaceKind::Corridor,
            center: Vector3::new(rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-1.0..1.0)),
            axis: None,
            walls: vec!["W1".into(), "W2".into()],
        });
        g
    }

    fn factors(g: &Graph, rng: &mut ChaCha8Rng) -> Vec<Factor> {
        let a = g.keyframes[0].pose;
        let b = g.keyframes[1].pose;
        let odo = a.inverse().compose(&b).unwrap().retagged(FrameId::Robot, FrameId::Robot);
        let odo = odo.compose(&Pose::exp_map(&small_noise(rng, 0.3), FrameId::Robot, FrameId::Robot)).unwrap();
        let m = g.markers[0].pose;
        let obs = b.compose(&g.extrinsic).unwrap().inverse().compose(&m).unwrap();
        let obs = obs.compose(&Pose::exp_map(&small_noise(rng, 0.3), FrameId::Marker(7), FrameId::Marker(7))).unwrap();
        let info6 = Vector6::repeat(1.0);
        vec![
            Factor::Odometry { from: 0, to: 1, meas: odo, steps: 1, info: info6 },
            Factor::MarkerObs { kf: 1, marker: 7, meas: obs, info: info6 },
            Factor::LoopClosure { kf: 0, marker: 7, meas: obs, info: info6 },
            Factor::MarkerOnWall { marker: 7, wall: 0, sign: 1.0, info: Vector4::repeat(1.0) },
            Factor::MarkerOnWall { marker: 7, wall: 1, sign: -1.0, info: Vector4::repeat(1.0) },
            Factor::Place { place: 0, walls: vec![0, 1], info: Vector3::repeat(1.0) },
        ]
    }

    #[test]
    fn analytic_jacobians_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let g = random_graph(&mut rng);
            for f in factors(&g, &mut rng) {
                let analytic = g.linearize(&f).unwrap();
                let numeric = g.numeric_jacobians(&f, 1e-6).unwrap();
                for ((va, ja), (vn, jn)) in analytic.blocks.iter().zip(&numeric) {
                    assert_eq!(va, vn);
                    let rel = (ja - jn).norm() / jn.norm().max(1e-8);
                    worst = worst.max(rel);
                }
            }
        }
        assert!(worst <= 1e-5, "worst relative error {worst}");
    }

    #[test]
    fn consistent_state_has_zero_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = random_graph(&mut rng);
        let a = g.keyframes[0].pose;
        let b = g.keyframes[1].pose;
        let odo = a.inverse().compose(&b).unwrap().retagged(FrameId::Robot, FrameId::Robot);
        let f = Factor::Odometry { from: 0, to: 1, meas: odo, steps: 1, info: Vector6::repeat(1.0) };
        assert!(g.residual(&f).unwrap().amax() < 1e-12);
        let obs = b.compose(&g.extrinsic).unwrap().inverse().compose(&g.markers[0].pose).unwrap();
        let f = Factor::MarkerObs { kf: 1, marker: 7, meas: obs, info: Vector6::repeat(1.0) };
        assert!(g.residual(&f).unwrap().amax() < 1e-12);
    }

    #[test]
    fn marker_off_plane_distance() {
        let mut g = Graph::new(Pose::identity(FrameId::Camera, FrameId::Robot));
        let q = crate::geometry::marker_rotation_from_normal(&Vector3::x()).unwrap();
        let pose = Pose::new(q, Vector3::new(2.1, 0.5, 1.0), FrameId::Marker(1), FrameId::World);
        g.insert_marker(MarkerNode { id: 1, pose, first_seen: 0.0, last_seen: 0.0 }).unwrap();
        g.walls.push(WallNode {
            id: "W".into(),
            normal: Vector3::x(),
            offset: -2.0,
            anchor: Vector3::new(2.0, 0.0, 1.0),
            markers: vec![1],
        });
        let f = Factor::MarkerOnWall { marker: 1, wall: 0, sign: 1.0, info: Vector4::repeat(1.0) };
        let r = g.residual(&f).unwrap();
        assert!((r[0] - 0.1).abs() < 1e-12);
        assert!(r.rows(1, 3).amax() < 1e-12);
    }

    #[test]
    fn wall_retraction_keeps_unit_normal() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut g = random_graph(&mut rng);
        for _ in 0..1000 {
            let d = [rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
            g.retract(VarRef::Wall(0), &d);
            assert!((g.walls[0].normal.norm() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn tangent_basis_is_orthonormal() {
        for n in [Vector3::x(), Vector3::y(), Vector3::z(), Vector3::new(1.0, 2.0, -0.5).normalize()] {
            let (e1, e2) = tangent_basis(&n);
            assert!(e1.dot(&n).abs() < 1e-15 && e2.dot(&n).abs() < 1e-15 && e1.dot(&e2).abs() < 1e-15);
            assert!((e1.norm() - 1.0).abs() < 1e-15 && (e2.norm() - 1.0).abs() < 1e-15);
        }
    }
}
