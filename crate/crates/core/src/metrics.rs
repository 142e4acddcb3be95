//! Angular pose errors and the rotation-only relative pose error (RPE).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{rotation_angle, Rotation3, UnitVector3};

/// Absolute camera orientations indexed by frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    rotations: Vec<Rotation3>,
}

impl Trajectory {
    pub fn new(rotations: Vec<Rotation3>) -> Result<Self> {
        if rotations.is_empty() {
            return Err(Error::InvalidArgument("trajectory is empty".into()));
        }
        Ok(Self { rotations })
    }

    pub fn rotations(&self) -> &[Rotation3] {
        &self.rotations
    }

    pub fn len(&self) -> usize {
        self.rotations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rotations.is_empty()
    }
}

/// `∠(R_trueᵀ R_est)` in degrees.
pub fn rotation_error(r_true: &Rotation3, r_est: &Rotation3) -> f64 {
    rotation_angle(&(r_true.transpose() * r_est)).to_degrees()
}

/// `acos(t_trueᵀ t_est)` in degrees. The sign of `t_est` is taken as given.
pub fn translation_error(t_true: &UnitVector3, t_est: &UnitVector3) -> f64 {
    t_true.dot(t_est).clamp(-1.0, 1.0).acos().to_degrees()
}

/// Root mean square of the residual angles between `Δ`-step relative rotations.
pub fn rpe(traj_true: &Trajectory, traj_est: &Trajectory, delta: usize) -> Result<f64> {
    if traj_true.len() != traj_est.len() {
        return Err(Error::InvalidArgument(format!(
            "trajectory lengths differ: {} vs {}",
            traj_true.len(),
            traj_est.len()
        )));
    }
    let n = traj_true.len();
    if delta == 0 || delta >= n {
        return Err(Error::InvalidArgument(format!(
            "delta must be in 1..{n}, got {delta}"
        )));
    }
    let (a, b) = (traj_true.rotations(), traj_est.rotations());
    let m = n - delta;
    let sum_sq: f64 = (0..m)
        .map(|i| {
            let rel_true = a[i].transpose() * a[i + delta];
            let rel_est = b[i].transpose() * b[i + delta];
            rotation_error(&rel_true, &rel_est).powi(2)
        })
        .sum();
    Ok((sum_sq / m as f64).sqrt())
}

pub fn rpe1(traj_true: &Trajectory, traj_est: &Trajectory) -> Result<f64> {
    rpe(traj_true, traj_est, 1)
}

/// Mean of `rpe` over every well-defined step `Δ = 1..n-1`.
pub fn rpen(traj_true: &Trajectory, traj_est: &Trajectory) -> Result<f64> {
    let n = traj_true.len();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least two frames".into()));
    }
    let mut total = 0.0;
    for delta in 1..n {
        total += rpe(traj_true, traj_est, delta)?;
    }
    Ok(total / (n - 1) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::{Unit, Vector3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_rotation(rng: &mut impl Rng) -> Rotation3 {
        Rotation3::new(Vector3::new(
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
            rng.random_range(-2.0..2.0),
        ))
    }

    fn random_axis(rng: &mut impl Rng) -> UnitVector3 {
        Unit::new_normalize(Vector3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        ))
    }

    #[test]
    fn rotation_error_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let r = random_rotation(&mut rng);
            assert_eq!(rotation_error(&r, &r), 0.0);
            let p = Rotation3::from_axis_angle(&random_axis(&mut rng), 0.12f64.to_radians());
            let est = r * p;
            assert_relative_eq!(rotation_error(&r, &est), 0.12, epsilon = 1e-9);
            assert_relative_eq!(rotation_error(&r, &est), rotation_error(&est, &r), epsilon = 1e-12);
        }
    }

    #[test]
    fn rotation_error_triangle_inequality() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let (a, b, c) = (
                random_rotation(&mut rng),
                random_rotation(&mut rng),
                random_rotation(&mut rng),
            );
            assert!(rotation_error(&a, &c) <= rotation_error(&a, &b) + rotation_error(&b, &c) + 1e-9);
        }
    }

    #[test]
    fn translation_error_cases() {
        let x = Vector3::x_axis();
        assert_eq!(translation_error(&x, &x), 0.0);
        assert_relative_eq!(translation_error(&x, &Vector3::y_axis()), 90.0, epsilon = 1e-12);
        assert_relative_eq!(translation_error(&x, &-x), 180.0, epsilon = 1e-12);
    }

    #[test]
    fn rpe_identical_and_constant_offset() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let truth: Vec<Rotation3> = (0..8).map(|_| random_rotation(&mut rng)).collect();
        let traj = Trajectory::new(truth.clone()).unwrap();
        for d in 1..8 {
            assert_eq!(rpe(&traj, &traj, d).unwrap(), 0.0);
        }

        let axis = random_axis(&mut rng);
        let q = Rotation3::from_axis_angle(&axis, 0.1f64.to_radians());
        let mut est = vec![truth[0]];
        for i in 1..truth.len() {
            let rel = truth[i - 1].transpose() * truth[i];
            est.push(est[i - 1] * rel * q);
        }
        let est = Trajectory::new(est).unwrap();
        assert_relative_eq!(rpe1(&traj, &est).unwrap(), 0.1, epsilon = 1e-9);
    }

    #[test]
    fn rpen_three_frames() {
        let z = Vector3::z_axis();
        let truth = Trajectory::new(vec![
            Rotation3::identity(),
            Rotation3::from_axis_angle(&z, 0.1),
            Rotation3::from_axis_angle(&z, 0.2),
        ])
        .unwrap();
        let est = Trajectory::new(vec![
            Rotation3::identity(),
            Rotation3::from_axis_angle(&z, 0.1 + 0.01),
            Rotation3::from_axis_angle(&z, 0.2 + 0.03),
        ])
        .unwrap();
        // Δ=1 residuals: 0.01, 0.02; Δ=2 residual: 0.03 (radians about z).
        let d1 = ((0.01f64.powi(2) + 0.02f64.powi(2)) / 2.0).sqrt().to_degrees();
        let d2 = 0.03f64.to_degrees();
        assert_relative_eq!(rpe(&truth, &est, 1).unwrap(), d1, epsilon = 1e-9);
        assert_relative_eq!(rpe(&truth, &est, 2).unwrap(), d2, epsilon = 1e-9);
        assert_relative_eq!(rpen(&truth, &est).unwrap(), (d1 + d2) / 2.0, epsilon = 1e-9);
    }

    #[test]
    fn rpe_argument_errors() {
        let a = Trajectory::new(vec![Rotation3::identity(); 3]).unwrap();
        let b = Trajectory::new(vec![Rotation3::identity(); 4]).unwrap();
        assert!(rpe(&a, &b, 1).is_err());
        assert!(rpe(&a, &a, 3).is_err());
        assert!(rpe(&a, &a, 0).is_err());
        assert!(Trajectory::new(vec![]).is_err());
    }

    #[test]
    fn rpe_global_rotation_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let truth: Vec<Rotation3> = (0..6).map(|_| random_rotation(&mut rng)).collect();
            let est: Vec<Rotation3> = truth
                .iter()
                .map(|r| r * Rotation3::new(Vector3::new(0.01, -0.02, 0.005) * rng.random::<f64>()))
                .collect();
            let g = random_rotation(&mut rng);
            let (t, e) = (Trajectory::new(truth.clone()).unwrap(), Trajectory::new(est.clone()).unwrap());
            let tg = Trajectory::new(truth.iter().map(|r| g * r).collect()).unwrap();
            let eg = Trajectory::new(est.iter().map(|r| g * r).collect()).unwrap();
            assert_relative_eq!(rpen(&t, &e).unwrap(), rpen(&tg, &eg).unwrap(), epsilon = 1e-8);
        }
    }
}
