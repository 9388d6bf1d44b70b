//! Rotation helpers shared by forward kinematics, pose alignment and the
//! differentiable renderer.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;

/// Skew-symmetric cross-product matrix `[v]x`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Axis-angle vector to rotation matrix (Rodrigues), with series fallback near
/// zero so the map stays smooth for gradient checks.
pub fn rodrigues(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let k = skew(omega);
    let (a, b) = if theta2 < 1e-14 {
        // sin(t)/t and (1-cos(t))/t^2 expanded around 0
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        let theta = theta2.sqrt();
        ((theta.sin()) / theta, (1.0 - theta.cos()) / theta2)
    };
    Matrix3::identity() + k * a + k * k * b
}

/// Right Jacobian of SO(3): `exp((w + d)^) ~= exp(w^) exp((Jr(w) d)^)`.
pub fn so3_right_jacobian(omega: &Vector3<f64>) -> Matrix3<f64> {
    let theta2 = omega.norm_squared();
    let k = skew(omega);
    let (a, b) = if theta2 < 1e-14 {
        (0.5 - theta2 / 24.0, 1.0 / 6.0 - theta2 / 120.0)
    } else {
        let theta = theta2.sqrt();
        (
            (1.0 - theta.cos()) / theta2,
            (theta - theta.sin()) / (theta2 * theta),
        )
    };
    Matrix3::identity() - k * a + k * k * b
}

/// Jacobian of `rodrigues(omega) * v` with respect to `omega` (3x3).
pub fn rotate_jacobian(omega: &Vector3<f64>, v: &Vector3<f64>) -> Matrix3<f64> {
    -rodrigues(omega) * skew(v) * so3_right_jacobian(omega)
}

/// Axis-angle vector of a rotation matrix (inverse of [`rodrigues`]).
pub fn axis_angle_from_matrix(m: &Matrix3<f64>) -> Vector3<f64> {
    let rot = nalgebra::Rotation3::from_matrix_unchecked(*m);
    nalgebra::UnitQuaternion::from_rotation_matrix(&rot).scaled_axis()
}

/// Geodesic distance between two rotations, in degrees. The angle whose
/// cosine is `(trace(a b^T) - 1) / 2`, computed through atan2 of the axial
/// and trace parts so angles near 0 keep full precision (plain acos bottoms
/// out around 2e-6 degrees).
pub fn rotation_angle_deg(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    let r = a * b.transpose();
    let axial = Vector3::new(
        r[(2, 1)] - r[(1, 2)],
        r[(0, 2)] - r[(2, 0)],
        r[(1, 0)] - r[(0, 1)],
    ) * 0.5;
    let s = axial.norm();
    let c = (r.trace() - 1.0) * 0.5;
    s.atan2(c).to_degrees()
}

/// Uniformly distributed random rotation (via normalized quaternion).
pub fn random_rotation<R: Rng>(rng: &mut R) -> Matrix3<f64> {
    use rand_distr::StandardNormal;
    loop {
        let q = nalgebra::Quaternion::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        if q.norm() > 1e-6 {
            return nalgebra::UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
        }
    }
}
