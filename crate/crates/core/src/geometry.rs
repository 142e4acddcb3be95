//! Rotation and direction parameterizations shared by every solver stage.
//!
//! Conventions used throughout the crate:
//! - a 3D point `x'` in the target frame maps to the host frame as `x = R x' + t`;
//! - Cayley parameters `u` map to `R = (I + [u]x)(I - [u]x)^-1`, a rotation about
//!   `u / |u|` by `2 atan |u|`;
//! - spherical directions use `v = (sin θ sin φ, -sin θ cos φ, cos θ)`.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Unit, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type UnitVector3 = Unit<Vector3<f64>>;
pub type Rotation3 = nalgebra::Rotation3<f64>;

/// Elementwise tolerance for `R Rᵀ = I` and `det R = 1`.
pub const ROTATION_TOLERANCE: f64 = 1e-10;
/// Tolerance on the norm of a unit vector.
pub const UNIT_TOLERANCE: f64 = 1e-12;

/// Three-parameter Cayley representation of a rotation with angle below π.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CayleyParams(pub Vector3<f64>);

/// Direction on the unit sphere. `theta` in `[0, π]`, `phi` in `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalDirection {
    pub theta: f64,
    pub phi: f64,
}

/// Cross-product matrix: `skew(u) * v == u.cross(v)`.
pub fn skew(u: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -u.z, u.y, u.z, 0.0, -u.x, -u.y, u.x, 0.0)
}

pub fn cayley_to_rotation(u: &CayleyParams) -> Rotation3 {
    let u = &u.0;
    let sq = u.norm_squared();
    let m = (Matrix3::identity() * (1.0 - sq) + u * u.transpose() * 2.0 + skew(u) * 2.0)
        / (1.0 + sq);
    Rotation3::from_matrix_unchecked(m)
}

/// Inverse of [`cayley_to_rotation`]. Fails for rotations by π, which have no
/// finite Cayley parameters.
pub fn rotation_to_cayley(r: &Rotation3) -> Result<CayleyParams> {
    let m = r.matrix();
    let denom = 1.0 + m.trace();
    if denom.abs() < 1e-12 {
        return Err(Error::InvalidArgument(
            "rotation by pi has no Cayley parameters".into(),
        ));
    }
    // vee((R - Rᵀ) / 2) = sin θ axis, and 1 + tr R = 2 (1 + cos θ)
    let v = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    Ok(CayleyParams(v / denom))
}

pub fn spherical_to_unit(d: &SphericalDirection) -> UnitVector3 {
    let (st, ct) = d.theta.sin_cos();
    let (sp, cp) = d.phi.sin_cos();
    Unit::new_unchecked(Vector3::new(st * sp, -st * cp, ct))
}

/// At the poles `phi` is reported as 0.
pub fn unit_to_spherical(v: &UnitVector3) -> SphericalDirection {
    let rho = v.x.hypot(v.y);
    let theta = rho.atan2(v.z);
    if rho < 1e-300 {
        return SphericalDirection { theta, phi: 0.0 };
    }
    let mut phi = v.x.atan2(-v.y);
    if phi < 0.0 {
        phi += 2.0 * PI;
    }
    if phi >= 2.0 * PI {
        phi -= 2.0 * PI;
    }
    SphericalDirection { theta, phi }
}

/// Angle of a rotation in `[0, π]`.
///
/// Evaluated as `atan2(|vee(R - Rᵀ)| / 2, clamp((tr R - 1) / 2))`, which agrees with
/// `acos` of the clamped trace term but keeps full precision for small angles.
pub fn rotation_angle(r: &Rotation3) -> f64 {
    let m = r.matrix();
    let cos = ((m.trace() - 1.0) / 2.0).clamp(-1.0, 1.0);
    let v = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let sin = (v.norm() / 2.0).min(1.0);
    sin.atan2(cos)
}

pub fn is_rotation(m: &Matrix3<f64>) -> bool {
    let orth = m * m.transpose() - Matrix3::identity();
    orth.iter().all(|x| x.abs() <= ROTATION_TOLERANCE)
        && (m.determinant() - 1.0).abs() <= ROTATION_TOLERANCE
}

pub fn rotation_from_matrix(m: Matrix3<f64>) -> Result<Rotation3> {
    if !m.iter().all(|x| x.is_finite()) || !is_rotation(&m) {
        return Err(Error::InvalidArgument(format!("not a rotation matrix: {m:?}")));
    }
    Ok(Rotation3::from_matrix_unchecked(m))
}

pub fn unit_from_vector(v: Vector3<f64>) -> Result<UnitVector3> {
    if !v.iter().all(|x| x.is_finite()) || (v.norm() - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::InvalidArgument(format!("not a unit vector: {v:?}")));
    }
    Ok(Unit::new_unchecked(v))
}

/// Re-orthonormalize a matrix that drifted from SO(3) through repeated products.
pub(crate) fn renormalize(r: &Rotation3) -> Rotation3 {
    let svd = r.matrix().svd(true, true);
    let (u, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut m = u * vt;
    if m.determinant() < 0.0 {
        let mut u = u;
        u.column_mut(2).neg_mut();
        m = u * vt;
    }
    Rotation3::from_matrix_unchecked(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_vec(rng: &mut impl Rng, scale: f64) -> Vector3<f64> {
        Vector3::new(
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
            rng.random_range(-scale..scale),
        )
    }

    #[test]
    fn skew_cases() {
        assert_eq!(skew(&Vector3::zeros()), Matrix3::zeros());
        let m = skew(&Vector3::x());
        assert_eq!(m * Vector3::y(), Vector3::z());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let (u, v) = (random_vec(&mut rng, 3.0), random_vec(&mut rng, 3.0));
            let w = skew(&u) * v;
            // component formula
            let expected = Vector3::new(
                u.y * v.z - u.z * v.y,
                u.z * v.x - u.x * v.z,
                u.x * v.y - u.y * v.x,
            );
            assert!((w - expected).amax() <= 1e-14);
            assert_eq!(skew(&u).transpose(), -skew(&u));
        }
    }

    #[test]
    fn cayley_matches_definition_and_axis_angle() {
        assert_eq!(
            cayley_to_rotation(&CayleyParams(Vector3::zeros())).into_inner(),
            Matrix3::identity()
        );
        let r = cayley_to_rotation(&CayleyParams(Vector3::x()));
        let oracle = Rotation3::from_axis_angle(&Vector3::x_axis(), PI / 2.0);
        assert!((r.matrix() - oracle.matrix()).amax() < 1e-15);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let u = random_vec(&mut rng, 4.0);
            let r = cayley_to_rotation(&CayleyParams(u));
            // (I + û)(I - û)^-1 evaluated with a general inverse
            let s = skew(&u);
            let direct = (Matrix3::identity() + s)
                * (Matrix3::identity() - s).try_inverse().unwrap();
            assert!((r.matrix() - direct).amax() < 1e-12);
            let (axis, angle) = r.axis_angle().unwrap();
            assert_relative_eq!(angle, 2.0 * u.norm().atan(), epsilon = 1e-10);
            assert!((axis.into_inner() - u.normalize()).amax() < 1e-10);
            assert!(is_rotation(r.matrix()));
            let back = rotation_to_cayley(&r).unwrap();
            assert!((back.0 - u).amax() < 1e-9 * (1.0 + u.norm_squared()));
        }
    }

    #[test]
    fn spherical_conventions() {
        let pole = spherical_to_unit(&SphericalDirection { theta: 0.0, phi: 1.3 });
        assert!((pole.into_inner() - Vector3::z()).amax() < 1e-15);
        let eq = spherical_to_unit(&SphericalDirection { theta: PI / 2.0, phi: 0.0 });
        assert!((eq.into_inner() - Vector3::new(0.0, -1.0, 0.0)).amax() < 1e-15);
        let d = unit_to_spherical(&Vector3::z_axis());
        assert_eq!(d, SphericalDirection { theta: 0.0, phi: 0.0 });
        let d = unit_to_spherical(&(-Vector3::z_axis()));
        assert_eq!(d.phi, 0.0);
        assert_relative_eq!(d.theta, PI);
    }

    #[test]
    fn spherical_round_trip_many() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10_000 {
            let v = Unit::new_normalize(random_vec(&mut rng, 1.0));
            let d = unit_to_spherical(&v);
            assert!((0.0..=PI).contains(&d.theta));
            assert!((0.0..2.0 * PI).contains(&d.phi));
            let w = spherical_to_unit(&d);
            assert!((v.into_inner() - w.into_inner()).amax() < 1e-12);
        }
    }

    #[test]
    fn rotation_angle_cases() {
        assert_eq!(rotation_angle(&Rotation3::identity()), 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let axis = Unit::new_normalize(random_vec(&mut rng, 1.0));
            let r = Rotation3::from_axis_angle(&axis, 0.3);
            assert_relative_eq!(rotation_angle(&r), 0.3, epsilon = 1e-12);
        }
        let mut m = Matrix3::identity();
        m[(0, 0)] += 1e-15;
        m[(1, 1)] += 1e-15;
        let r = Rotation3::from_matrix_unchecked(m);
        let a = rotation_angle(&r);
        assert!(!a.is_nan());
        assert_eq!(a, 0.0);
        assert_relative_eq!(
            rotation_angle(&Rotation3::from_axis_angle(&Vector3::y_axis(), PI)),
            PI,
            epsilon = 1e-12
        );
    }

    #[test]
    fn relative_angle_is_symmetric() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let a = Rotation3::new(random_vec(&mut rng, 2.0));
            let b = Rotation3::new(random_vec(&mut rng, 2.0));
            let ab = rotation_angle(&(a.transpose() * b));
            let ba = rotation_angle(&(b.transpose() * a));
            assert_relative_eq!(ab, ba, epsilon = 1e-12);
        }
    }

    #[test]
    fn validation_helpers() {
        assert!(rotation_from_matrix(Matrix3::identity() * 2.0).is_err());
        assert!(rotation_from_matrix(-Matrix3::identity()).is_err());
        assert!(unit_from_vector(Vector3::new(1.0, 1e-5, 0.0)).is_err());
        assert!(unit_from_vector(Vector3::x()).is_ok());
        let drifted = Rotation3::from_matrix_unchecked(
            Rotation3::new(Vector3::new(0.1, 0.2, 0.3)).into_inner() * (1.0 + 1e-7),
        );
        assert!(is_rotation(renormalize(&drifted).matrix()));
    }
}
