//! Rotation step: damped Newton (Levenberg-Marquardt) minimization of
//! `λ_min(M_P(R))` over local Cayley increments `R = R₀ C(u)`.

use nalgebra::{Matrix3, Vector3};

use super::{SolverConfig, DAMPING_DECREASE, DAMPING_INCREASE, INITIAL_DAMPING, MAX_DAMPING};
use crate::eigen::SymEigen3;
use crate::energy::{check_weights, epipolar_normal, weighted_gram, BearingPair};
use crate::error::{Error, Result};
use crate::geometry::{cayley_to_rotation, renormalize, skew, CayleyParams, Rotation3};

/// Central-difference step for the Hessian of the objective.
const HESSIAN_STEP: f64 = 1e-6;
/// `λ_min` below this fraction of `tr M_P` is treated as an exact solution.
const EIGEN_FLOOR: f64 = 1e-20;

#[derive(Debug, Clone, PartialEq)]
pub struct RotationOutcome {
    pub rotation: Rotation3,
    pub objective: f64,
    pub initial_objective: f64,
    /// LM iterations, including rejected trial steps.
    pub iterations: usize,
    pub accepted: usize,
    /// Ended by damping overflow; `rotation` is the best iterate found.
    pub stalled: bool,
    /// Objective after every accepted step.
    pub trace: Vec<f64>,
}

/// `∂C/∂uₖ` of the closed-form Cayley map.
fn cayley_derivatives(u: &Vector3<f64>) -> [Matrix3<f64>; 3] {
    let sq = u.norm_squared();
    let d = 1.0 + sq;
    let num = Matrix3::identity() * (1.0 - sq) + u * u.transpose() * 2.0 + skew(u) * 2.0;
    std::array::from_fn(|k| {
        let e = Vector3::ith(k, 1.0);
        let dnum = Matrix3::identity() * (-2.0 * u[k])
            + (e * u.transpose() + u * e.transpose()) * 2.0
            + skew(&e) * 2.0;
        (dnum * d - num * (2.0 * u[k])) / (d * d)
    })
}

pub fn rotation_objective(set: &[BearingPair], weights: &[f64], r: &Rotation3) -> Result<f64> {
    Ok(SymEigen3::new(&weighted_gram(set, r, weights)?).min_value())
}

/// `λ_min(M_P(R₀ C(u)))` and its gradient in `u`.
///
/// With `v` the unit eigenvector of the smallest eigenvalue,
/// `∂λ/∂uₖ = Σ 2 (vᵀnᵢ)(vᵀ∂nᵢ/∂uₖ) / σ̃ᵢ²` away from eigenvalue crossings.
pub fn rotation_objective_gradient(
    set: &[BearingPair],
    weights: &[f64],
    r0: &Rotation3,
    u: &Vector3<f64>,
) -> Result<(f64, Vector3<f64>)> {
    let c = cayley_to_rotation(&CayleyParams(*u));
    let r = r0 * c;
    let m = weighted_gram(set, &r, weights)?;
    let eig = SymEigen3::new(&m);
    let v = eig.min_vector();
    let dc = cayley_derivatives(u);
    let dr: [Matrix3<f64>; 3] = std::array::from_fn(|k| r0.matrix() * dc[k]);
    let mut grad = Vector3::zeros();
    for (p, w) in set.iter().zip(weights) {
        let n = epipolar_normal(p, &r);
        let vn = v.dot(&n);
        let fp = p.f_target.into_inner();
        for k in 0..3 {
            let dn = p.f_host.cross(&(dr[k] * fp));
            grad[k] += 2.0 * vn * v.dot(&dn) / (w * w);
        }
    }
    Ok((eig.min_value(), grad))
}

fn hessian(
    set: &[BearingPair],
    weights: &[f64],
    r: &Rotation3,
) -> Result<Matrix3<f64>> {
    let mut h = Matrix3::zeros();
    for j in 0..3 {
        let step = Vector3::ith(j, HESSIAN_STEP);
        let (_, gp) = rotation_objective_gradient(set, weights, r, &step)?;
        let (_, gm) = rotation_objective_gradient(set, weights, r, &-step)?;
        h.set_column(j, &((gp - gm) / (2.0 * HESSIAN_STEP)));
    }
    Ok((h + h.transpose()) * 0.5)
}

/// Minimize `λ_min(M_P(R))` from `r_init` with the weights held fixed.
pub fn rotation_step(
    set: &[BearingPair],
    weights: &[f64],
    r_init: &Rotation3,
    config: &SolverConfig,
) -> Result<RotationOutcome> {
    check_weights(weights)?;
    if weights.len() != set.len() {
        return Err(Error::InvalidArgument("one weight per correspondence required".into()));
    }
    let floor = EIGEN_FLOOR * weighted_gram(set, r_init, weights)?.trace();
    let mut r = *r_init;
    let (mut f, mut g) = rotation_objective_gradient(set, weights, &r, &Vector3::zeros())?;
    let mut out = RotationOutcome {
        rotation: r,
        objective: f,
        initial_objective: f,
        iterations: 0,
        accepted: 0,
        stalled: false,
        trace: Vec::new(),
    };
    if f <= floor {
        return Ok(out);
    }
    let mut h = hessian(set, weights, &r)?;
    let mut mu = INITIAL_DAMPING;
    while out.iterations < config.lm_max_iters {
        out.iterations += 1;
        let scale = h.diagonal().abs().max().max(f64::MIN_POSITIVE);
        let d = h.diagonal().map(|x| x.abs().max(1e-12 * scale));
        let damped = h + Matrix3::from_diagonal(&(d * mu));
        let step = damped.cholesky().map(|c| c.solve(&-g));
        let candidate = match step {
            Some(delta) if delta.iter().all(|x| x.is_finite()) => {
                let trial = renormalize(&(r * cayley_to_rotation(&CayleyParams(delta))));
                let (ft, gt) = rotation_objective_gradient(set, weights, &trial, &Vector3::zeros())?;
                (ft < f).then_some((trial, ft, gt))
            }
            _ => None,
        };
        match candidate {
            Some((trial, ft, gt)) => {
                let rel = (f - ft) / f.abs().max(f64::MIN_POSITIVE);
                r = trial;
                f = ft;
                g = gt;
                out.accepted += 1;
                out.trace.push(f);
                mu = (mu * DAMPING_DECREASE).max(1e-15);
                if rel < config.lm_tolerance || f <= floor {
                    break;
                }
                h = hessian(set, weights, &r)?;
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
    out.rotation = r;
    out.objective = f;
    Ok(out)
}
