#![allow(dead_code)]

use nalgebra::{Matrix2, Matrix3, Unit, Vector3};
use pnec::uncertainty::unscented_omni;
use pnec::{BearingPair, Rotation3, UnitVector3};
use rand::Rng;
use rand_distr::StandardNormal;

pub fn random_unit(rng: &mut impl Rng) -> UnitVector3 {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        if v.norm() > 1e-6 {
            return Unit::new_normalize(v);
        }
    }
}

pub fn random_rotation(rng: &mut impl Rng, max_angle: f64) -> Rotation3 {
    let axis = random_unit(rng);
    Rotation3::from_axis_angle(&axis, rng.random_range(0.0..=max_angle))
}

pub fn random_spd2(rng: &mut impl Rng, scale: f64) -> Matrix2<f64> {
    let a: f64 = rng.random_range(0.0..std::f64::consts::PI);
    let r = nalgebra::Rotation2::new(a).into_inner();
    let d = Matrix2::new(rng.random_range(0.2..1.0), 0.0, 0.0, rng.random_range(0.2..1.0));
    r * d * r.transpose() * scale
}

/// Tangent-plane covariance at `f` with a random 2D shape of size `scale²`.
pub fn random_bearing_cov(rng: &mut impl Rng, f: &UnitVector3, scale: f64) -> Matrix3<f64> {
    unscented_omni(f, &random_spd2(rng, scale * scale), 1.0).unwrap()
}

/// Exact correspondences of `n` points around the host camera for `x = R x' + t`.
/// `cov_scale` sets the size of the attached (not applied) covariances.
pub fn noise_free_pairs(
    rng: &mut impl Rng,
    n: usize,
    r: &Rotation3,
    t: &Vector3<f64>,
    cov_scale: f64,
) -> Vec<BearingPair> {
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let x = random_unit(rng).into_inner() * rng.random_range(4.0..8.0);
        let xp = r.transpose() * (x - t);
        if xp.norm() < 1e-3 {
            continue;
        }
        let fp = Unit::new_normalize(xp);
        let cov = if cov_scale > 0.0 {
            random_bearing_cov(rng, &fp, cov_scale)
        } else {
            Matrix3::zeros()
        };
        out.push(BearingPair::new(Unit::new_normalize(x), fp, cov).unwrap());
    }
    out
}

/// Correspondences with target bearings perturbed in the tangent plane by noise drawn
/// from their attached covariance shape.
pub fn noisy_pairs(
    rng: &mut impl Rng,
    n: usize,
    r: &Rotation3,
    t: &Vector3<f64>,
    sigma: f64,
) -> Vec<BearingPair> {
    noise_free_pairs(rng, n, r, t, sigma)
        .into_iter()
        .map(|p| {
            let z = Vector3::new(
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
                rng.sample::<f64, _>(StandardNormal),
            );
            let (vals, vecs) = {
                let e = p.cov_target.symmetric_eigen();
                (e.eigenvalues, e.eigenvectors)
            };
            let noise = vecs * Vector3::new(
                vals[0].max(0.0).sqrt() * z.x,
                vals[1].max(0.0).sqrt() * z.y,
                vals[2].max(0.0).sqrt() * z.z,
            );
            let f = Unit::new_normalize(p.f_target.into_inner() + noise);
            BearingPair::new(p.f_host, f, p.cov_target).unwrap()
        })
        .collect()
}
