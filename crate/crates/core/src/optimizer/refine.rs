//! Joint Levenberg-Marquardt refinement of rotation and translation on the whitened
//! residuals `rᵢ = tᵀnᵢ / σ'ᵢ`.
//!
//! Rotation updates are local Cayley increments `R ← R C(u)`; the translation is
//! parameterized by spherical angles `(θ, φ)`.

use nalgebra::{SMatrix, SVector, Vector3};

use super::{
    RelativePose, SolverConfig, DAMPING_DECREASE, DAMPING_INCREASE, INITIAL_DAMPING, MAX_DAMPING,
};
use crate::energy::{epipolar_normal, normal_covariance, pairwise_sum, BearingPair, SINGULARITY_GUARD};
use crate::error::{Error, Result};
use crate::geometry::{
    cayley_to_rotation, renormalize, spherical_to_unit, unit_to_spherical, CayleyParams,
    Rotation3, SphericalDirection, UnitVector3,
};

/// Energies below this are treated as an exact fit and left untouched.
pub const JOINT_ENERGY_FLOOR: f64 = 1e-20;

type Row5 = SVector<f64, 5>;
type Mat5 = SMatrix<f64, 5, 5>;

#[derive(Debug, Clone, PartialEq)]
pub struct RefinementOutcome {
    pub pose: RelativePose,
    pub energy: f64,
    pub initial_energy: f64,
    pub iterations: usize,
    pub accepted: usize,
    pub stalled: bool,
    pub trace: Vec<f64>,
}

fn variance(b: f64) -> Result<f64> {
    if b < SINGULARITY_GUARD {
        Err(Error::Singularity(b))
    } else {
        Ok(b)
    }
}

/// Signed whitened residuals `tᵀnᵢ / sqrt(tᵀΣₙ,ᵢt + c)`.
pub fn joint_residuals(
    set: &[BearingPair],
    r: &Rotation3,
    t: &UnitVector3,
    c: f64,
) -> Result<Vec<f64>> {
    set.iter()
        .map(|p| {
            let a = t.dot(&epipolar_normal(p, r));
            let g = r.transpose() * t.cross(&p.f_host);
            let b = variance(g.dot(&(p.cov_target * g)) + c)?;
            Ok(a / b.sqrt())
        })
        .collect()
}

/// Residual Jacobian rows over `(u₁, u₂, u₃, θ, φ)`, with `u` a Cayley increment
/// applied on the right of `r` and evaluated at `u = 0`.
pub fn joint_jacobian(
    set: &[BearingPair],
    r: &Rotation3,
    dir: &SphericalDirection,
    c: f64,
) -> Result<Vec<Row5>> {
    let t = spherical_to_unit(dir).into_inner();
    let (st, ct) = dir.theta.sin_cos();
    let (sp, cp) = dir.phi.sin_cos();
    let dt_dtheta = Vector3::new(ct * sp, -ct * cp, -st);
    let dt_dphi = Vector3::new(st * cp, st * sp, 0.0);
    set.iter()
        .map(|p| {
            let n = epipolar_normal(p, r);
            let sn = normal_covariance(p, r);
            let fp = p.f_target.into_inner();
            let g = r.transpose() * t.cross(&p.f_host);
            let sg = p.cov_target * g;
            let a = t.dot(&n);
            let b = variance(g.dot(&sg) + c)?;
            let da_du = fp.cross(&g) * 2.0;
            let db_du = sg.cross(&g) * 4.0;
            let snt = sn * t;
            let da_dt = [n.dot(&dt_dtheta), n.dot(&dt_dphi)];
            let db_dt = [2.0 * snt.dot(&dt_dtheta), 2.0 * snt.dot(&dt_dphi)];
            let sb = b.sqrt();
            let d = |da: f64, db: f64| da / sb - a * db / (2.0 * b * sb);
            Ok(Row5::new(
                d(da_du.x, db_du.x),
                d(da_du.y, db_du.y),
                d(da_du.z, db_du.z),
                d(da_dt[0], db_dt[0]),
                d(da_dt[1], db_dt[1]),
            ))
        })
        .collect()
}

fn cost(residuals: &[f64]) -> f64 {
    let sq: Vec<f64> = residuals.iter().map(|r| r * r).collect();
    pairwise_sum(&sq)
}

pub fn joint_refinement(
    set: &[BearingPair],
    config: &SolverConfig,
    pose_init: &RelativePose,
) -> Result<RefinementOutcome> {
    let c = config.regularization;
    if c <= 0.0 {
        return Err(Error::InvalidArgument("joint refinement requires c > 0".into()));
    }
    let mut r = pose_init.rotation;
    let mut dir = unit_to_spherical(&pose_init.translation);
    let mut res = joint_residuals(set, &r, &pose_init.translation, c)?;
    let mut energy = cost(&res);
    let mut out = RefinementOutcome {
        pose: *pose_init,
        energy,
        initial_energy: energy,
        iterations: 0,
        accepted: 0,
        stalled: false,
        trace: Vec::new(),
    };
    if energy < JOINT_ENERGY_FLOOR {
        return Ok(out);
    }
    let normal_eq = |r: &Rotation3, dir: &SphericalDirection, res: &[f64]| -> Result<(Mat5, Row5)> {
        let jac = joint_jacobian(set, r, dir, c)?;
        let mut jtj = Mat5::zeros();
        let mut jtr = Row5::zeros();
        for (row, ri) in jac.iter().zip(res) {
            jtj += row * row.transpose();
            jtr += row * *ri;
        }
        Ok((jtj, jtr))
    };
    let (mut jtj, mut jtr) = normal_eq(&r, &dir, &res)?;
    let mut mu = INITIAL_DAMPING;
    while out.iterations < config.lm_max_iters {
        out.iterations += 1;
        let scale = jtj.diagonal().max().max(f64::MIN_POSITIVE);
        let d = jtj.diagonal().map(|x| x.max(1e-12 * scale));
        let damped = jtj + Mat5::from_diagonal(&(d * mu));
        let candidate = damped.cholesky().map(|ch| ch.solve(&-jtr)).and_then(|delta| {
            if !delta.iter().all(|x| x.is_finite()) {
                return None;
            }
            let u = Vector3::new(delta[0], delta[1], delta[2]);
            let r_new = renormalize(&(r * cayley_to_rotation(&CayleyParams(u))));
            let dir_new = SphericalDirection {
                theta: dir.theta + delta[3],
                phi: dir.phi + delta[4],
            };
            let t_new = spherical_to_unit(&dir_new);
            let res_new = joint_residuals(set, &r_new, &t_new, c).ok()?;
            let e_new = cost(&res_new);
            (e_new < energy).then_some((r_new, dir_new, res_new, e_new))
        });
        match candidate {
            Some((r_new, dir_new, res_new, e_new)) => {
                let rel = (energy - e_new) / energy;
                r = r_new;
                dir = dir_new;
                res = res_new;
                energy = e_new;
                out.accepted += 1;
                out.trace.push(energy);
                mu = (mu * DAMPING_DECREASE).max(1e-15);
                if rel < config.lm_tolerance || energy < JOINT_ENERGY_FLOOR {
                    break;
                }
                (jtj, jtr) = normal_eq(&r, &dir, &res)?;
            }
            None => {
                mu *= DAMPING_INCREASE;
                if mu > MAX_DAMPING {
                    out.stalled = true;
                    break;
                }
            }
        }
    }
    out.pose = RelativePose { rotation: r, translation: spherical_to_unit(&dir) };
    out.energy = energy;
    Ok(out)
}
