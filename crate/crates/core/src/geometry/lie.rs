//! SE(3) exponential/logarithm maps and their Jacobians.
//!
//! Twists are ordered `[rho; phi]`: translation block first, rotation block
//! second. Perturbations throughout the crate are applied on the right,
//! `T <- T * exp(delta)`.

use nalgebra::{Isometry3, Matrix3, Matrix6, Translation3, UnitQuaternion, Vector3, Vector6};

use super::GeometryError;

/// Below this angle the closed-form coefficients switch to Taylor series.
const SMALL_ANGLE: f64 = 1e-4;

/// Rotation angles at or beyond `PI - NEAR_PI` have no unique logarithm.
pub const NEAR_PI: f64 = 1e-6;

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn exp_so3(phi: &Vector3<f64>) -> UnitQuaternion<f64> {
    UnitQuaternion::from_scaled_axis(*phi)
}

/// Rotation vector of a unit quaternion. Fails when the angle is within
/// [`NEAR_PI`] of pi.
pub fn log_so3(q: &UnitQuaternion<f64>) -> Result<Vector3<f64>, GeometryError> {
    let q = q.quaternion();
    // Canonical hemisphere so the angle lands in [0, pi].
    let (w, v) = if q.w < 0.0 { (-q.w, -q.imag()) } else { (q.w, q.imag()) };
    let vn = v.norm();
    let angle = 2.0 * vn.atan2(w);
    if angle > std::f64::consts::PI - NEAR_PI {
        return Err(GeometryError::DegenerateLog { angle });
    }
    if vn < 1e-12 {
        // atan2(|v|, w) / |v| -> 1 / w
        return Ok(v * (2.0 / w));
    }
    Ok(v * (angle / vn))
}

/// Left Jacobian of SO(3).
pub fn so3_left_jacobian(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    let k2 = k * k;
    let (a, b) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (0.5 - t2 / 24.0, 1.0 / 6.0 - t2 / 120.0)
    } else {
        let t2 = theta * theta;
        ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    };
    Matrix3::identity() + k * a + k2 * b
}

pub fn so3_left_jacobian_inv(phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let k = skew(phi);
    let k2 = k * k;
    let c = if theta < SMALL_ANGLE {
        1.0 / 12.0 + theta * theta / 720.0
    } else {
        1.0 / (theta * theta) - (1.0 + theta.cos()) / (2.0 * theta * theta.sin())
    };
    Matrix3::identity() - k * 0.5 + k2 * c
}

/// The coupling block `Q(rho, phi)` of the SE(3) left Jacobian.
fn se3_q(rho: &Vector3<f64>, phi: &Vector3<f64>) -> Matrix3<f64> {
    let theta = phi.norm();
    let p = skew(phi);
    let r = skew(rho);
    let pr = p * r;
    let rp = r * p;
    let prp = pr * p;
    let (c1, c2, c3) = if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        (1.0 / 6.0 - t2 / 120.0, 1.0 / 24.0 - t2 / 720.0, 1.0 / 120.0 - t2 / 2520.0)
    } else {
        let (s, c) = theta.sin_cos();
        let t2 = theta * theta;
        let t3 = t2 * theta;
        (
            (theta - s) / t3,
            (t2 + 2.0 * c - 2.0) / (2.0 * t2 * t2),
            (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t3 * t2),
        )
    };
    r * 0.5 + (pr + rp + prp) * c1 + (p * pr + rp * p - prp * 3.0) * c2 + (prp * p + p * prp) * c3
}

/// Inverse of the SE(3) left Jacobian evaluated at `xi`.
pub fn se3_left_jacobian_inv(xi: &Vector6<f64>) -> Matrix6<f64> {
    let rho = xi.fixed_rows::<3>(0).into_owned();
    let phi = xi.fixed_rows::<3>(3).into_owned();
    let jinv = so3_left_jacobian_inv(&phi);
    let q = se3_q(&rho, &phi);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&jinv);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&jinv);
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(-jinv * q * jinv));
    out
}

/// Inverse right Jacobian: `log(exp(xi) * exp(d)) ~ xi + Jr^-1(xi) d`.
pub fn se3_right_jacobian_inv(xi: &Vector6<f64>) -> Matrix6<f64> {
    se3_left_jacobian_inv(&(-xi))
}

/// Adjoint of an SE(3) element in `[rho; phi]` ordering.
pub fn adjoint(t: &Isometry3<f64>) -> Matrix6<f64> {
    let r = t.rotation.to_rotation_matrix().into_inner();
    let tx = skew(&t.translation.vector);
    let mut out = Matrix6::zeros();
    out.fixed_view_mut::<3, 3>(0, 0).copy_from(&r);
    out.fixed_view_mut::<3, 3>(3, 3).copy_from(&r);
    out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(tx * r));
    out
}

pub fn exp_se3(xi: &Vector6<f64>) -> Isometry3<f64> {
    let rho = xi.fixed_rows::<3>(0).into_owned();
    let phi = xi.fixed_rows::<3>(3).into_owned();
    let t = so3_left_jacobian(&phi) * rho;
    Isometry3::from_parts(Translation3::from(t), exp_so3(&phi))
}

pub fn log_se3(t: &Isometry3<f64>) -> Result<Vector6<f64>, GeometryError> {
    let phi = log_so3(&t.rotation)?;
    let rho = so3_left_jacobian_inv(&phi) * t.translation.vector;
    let mut xi = Vector6::zeros();
    xi.fixed_rows_mut::<3>(0).copy_from(&rho);
    xi.fixed_rows_mut::<3>(3).copy_from(&phi);
    Ok(xi)
}

/// Right-perturbed retraction `t * exp(delta)` with the rotation renormalized.
pub fn retract(t: &Isometry3<f64>, delta: &Vector6<f64>) -> Isometry3<f64> {
    renormalize(t * exp_se3(delta))
}

pub fn renormalize(t: Isometry3<f64>) -> Isometry3<f64> {
    let q = UnitQuaternion::new_normalize(t.rotation.into_inner());
    Isometry3::from_parts(t.translation, q)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn exp_log_identity() {
        let xi = log_se3(&Isometry3::identity()).unwrap();
        assert_eq!(xi, Vector6::zeros());
        let t = exp_se3(&Vector6::zeros());
        assert_relative_eq!(t.to_homogeneous(), Isometry3::identity().to_homogeneous());
    }

    #[test]
    fn log_rejects_half_turn() {
        let q = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::PI);
        assert!(matches!(log_so3(&q), Err(GeometryError::DegenerateLog { .. })));
    }

    #[test]
    fn left_jacobian_inverse_is_inverse() {
        for phi in [Vector3::new(0.3, -0.2, 0.9), Vector3::new(1e-6, 2e-6, -1e-6), Vector3::new(2.5, 0.1, 0.0)] {
            let prod = so3_left_jacobian(&phi) * so3_left_jacobian_inv(&phi);
            assert_relative_eq!(prod, Matrix3::identity(), epsilon = 1e-12);
        }
    }

    #[test]
    fn right_jacobian_inverse_matches_finite_difference() {
        let xi = Vector6::new(0.4, -0.3, 0.8, 0.5, -0.7, 0.2);
        let base = exp_se3(&xi);
        let analytic = se3_right_jacobian_inv(&xi);
        let h = 1e-6;
        for k in 0..6 {
            let mut d = Vector6::zeros();
            d[k] = h;
            let plus = log_se3(&(base * exp_se3(&d))).unwrap();
            let minus = log_se3(&(base * exp_se3(&(-d)))).unwrap();
            let col = (plus - minus) / (2.0 * h);
            assert_relative_eq!(col, analytic.column(k).into_owned(), epsilon = 1e-7);
        }
    }

    #[test]
    fn small_angle_branch_is_continuous() {
        let a = Vector6::new(0.1, 0.2, 0.3, 0.0, 0.0, 0.99e-4);
        let b = Vector6::new(0.1, 0.2, 0.3, 0.0, 0.0, 1.01e-4);
        let ja = se3_left_jacobian_inv(&a);
        let jb = se3_left_jacobian_inv(&b);
        assert_relative_eq!(ja, jb, epsilon = 1e-5);
    }
}
