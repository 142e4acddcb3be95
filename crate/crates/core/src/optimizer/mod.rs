//! Rotation and translation-direction solvers.
//!
//! The PNEC estimator alternates a covariance-weighted eigenvalue rotation step with
//! a self-consistent-field (SCF) translation step and a reweighting of the residuals,
//! then refines rotation and translation jointly with Levenberg-Marquardt. The NEC
//! baseline minimizes the smallest eigenvalue of the unweighted Gramian.

mod cheirality;
mod refine;
mod rotation;
mod scf;

use std::time::Instant;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

pub use cheirality::{resolve_translation_sign, triangulate_depths};
pub use refine::{
    joint_jacobian, joint_refinement, joint_residuals, RefinementOutcome, JOINT_ENERGY_FLOOR,
};
pub use rotation::{
    rotation_objective, rotation_objective_gradient, rotation_step, RotationOutcome,
};
pub use scf::{
    fibonacci_lattice, nec_translation, scf_e_matrix, scf_optimize, scf_optimize_from,
    scf_residual, ScfOutcome,
};

use crate::energy::{pnec_energy, residual_variance, weighted_gram, BearingPair, Regularization};
use crate::error::{Error, Result};
use crate::geometry::{Rotation3, UnitVector3};

/// LM schedule shared by the rotation step and the joint refinement.
pub const INITIAL_DAMPING: f64 = 1e-6;
pub const DAMPING_INCREASE: f64 = 10.0;
pub const DAMPING_DECREASE: f64 = 0.3;
/// Damping beyond which an LM stage is declared stalled.
pub const MAX_DAMPING: f64 = 1e16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    /// Alternation rounds `S` before the joint refinement.
    pub outer_iterations: usize,
    pub scf_iterations: usize,
    /// Fibonacci lattice size `K` for the SCF start point.
    pub lattice_points: usize,
    pub regularization: f64,
    pub lm_max_iters: usize,
    /// Relative energy decrease below which LM stops.
    pub lm_tolerance: f64,
    /// Unscented-transform spread used when covariances are propagated.
    pub kappa: f64,
    /// Resample the lattice every round; otherwise only in the first round and warm
    /// start the SCF afterwards.
    pub lattice_every_iteration: bool,
    /// Update the residual weights between rounds.
    pub reweight: bool,
    pub joint_refinement: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            outer_iterations: 10,
            scf_iterations: 10,
            lattice_points: 500,
            regularization: crate::energy::DEFAULT_REGULARIZATION,
            lm_max_iters: 50,
            lm_tolerance: 1e-10,
            kappa: crate::uncertainty::DEFAULT_KAPPA,
            lattice_every_iteration: true,
            reweight: true,
            joint_refinement: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidArgument(msg));
        if self.outer_iterations < 1 {
            return fail("outer_iterations must be >= 1".into());
        }
        if self.scf_iterations < 1 {
            return fail("scf_iterations must be >= 1".into());
        }
        if self.lattice_points < 2 {
            return fail("lattice_points must be >= 2".into());
        }
        if !(self.regularization.is_finite() && self.regularization >= 0.0) {
            return fail(format!("regularization must be >= 0, got {}", self.regularization));
        }
        if self.lm_max_iters < 1 {
            return fail("lm_max_iters must be >= 1".into());
        }
        if !(self.lm_tolerance.is_finite() && self.lm_tolerance > 0.0) {
            return fail(format!("lm_tolerance must be > 0, got {}", self.lm_tolerance));
        }
        if !(self.kappa.is_finite() && 2.0 + self.kappa > 0.0) {
            return fail(format!("kappa must satisfy n + kappa > 0, got {}", self.kappa));
        }
        Ok(())
    }

    pub fn reg(&self) -> Regularization {
        Regularization::new(self.regularization).expect("validated regularization")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativePose {
    pub rotation: Rotation3,
    pub translation: UnitVector3,
}

impl RelativePose {
    pub fn identity() -> Self {
        Self { rotation: Rotation3::identity(), translation: Vector3::z_axis() }
    }
}

/// One round of the alternation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    /// `λ_min(M_P)` after the rotation step, with the weights of the previous round.
    pub weighted_lambda_min: f64,
    /// `E_P` at the round's `(R, t)`.
    pub energy: f64,
    pub rotation_iterations: usize,
    pub rotation_stalled: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub pose: RelativePose,
    /// `E_P` for PNEC, `λ_min(M)` for NEC, at the returned pose.
    pub final_energy: f64,
    /// Energy before the joint refinement (equal to `final_energy` without it).
    pub stage1_energy: f64,
    pub rounds: Vec<RoundTrace>,
    /// Accepted-step energies of the rotation LM (NEC) or the joint refinement (PNEC).
    pub lm_trace: Vec<f64>,
    pub lm_iterations: usize,
    /// An LM stage ended by damping overflow rather than convergence.
    pub stalled: bool,
    /// The joint refinement accepted no step.
    pub refinement_no_progress: bool,
    pub wall_time: f64,
}

fn check_nondegenerate(set: &[BearingPair]) -> Result<()> {
    if set.len() < crate::energy::MIN_CORRESPONDENCES {
        return Err(Error::TooFewCorrespondences {
            needed: crate::energy::MIN_CORRESPONDENCES,
            got: set.len(),
        });
    }
    let spread = |f: &dyn Fn(&BearingPair) -> Vector3<f64>| {
        let first = f(&set[0]);
        set.iter().map(|p| first.cross(&f(p)).norm()).fold(0.0, f64::max)
    };
    if spread(&|p| p.f_host.into_inner()) < 1e-9 || spread(&|p| p.f_target.into_inner()) < 1e-9 {
        return Err(Error::DegenerateConfiguration("all bearings are parallel".into()));
    }
    Ok(())
}

/// PNEC estimate seeded at `(r_init, t_init)`.
pub fn pnec_estimate(
    set: &[BearingPair],
    config: &SolverConfig,
    r_init: &Rotation3,
    t_init: &UnitVector3,
) -> Result<EstimateReport> {
    let start = Instant::now();
    config.validate()?;
    check_nondegenerate(set)?;
    let reg = config.reg();
    let lattice = fibonacci_lattice(config.lattice_points)?;

    let mut weights = vec![1.0; set.len()];
    let mut r = *r_init;
    let mut t = *t_init;
    let mut rounds = Vec::with_capacity(config.outer_iterations);
    let mut stalled = false;
    for s in 0..config.outer_iterations {
        let rot = rotation_step(set, &weights, &r, config)?;
        r = rot.rotation;
        stalled |= rot.stalled;
        let scf = if s == 0 || config.lattice_every_iteration {
            scf_optimize_from(set, &r, config, &lattice, Some(&t))?
        } else {
            scf_optimize_from(set, &r, config, &[], Some(&t))?
        };
        t = scf.translation;
        if config.reweight {
            for (w, p) in weights.iter_mut().zip(set) {
                *w = residual_variance(p, &r, &t, reg).sqrt();
            }
        }
        rounds.push(RoundTrace {
            weighted_lambda_min: rot.objective,
            energy: scf.energy,
            rotation_iterations: rot.iterations,
            rotation_stalled: rot.stalled,
        });
    }
    let stage1_energy = pnec_energy(set, &r, &t, reg)?;

    let (pose, lm_trace, lm_iterations, no_progress) = if config.joint_refinement {
        let out = joint_refinement(set, config, &RelativePose { rotation: r, translation: t })?;
        stalled |= out.stalled;
        (out.pose, out.trace, out.iterations, out.accepted == 0)
    } else {
        (RelativePose { rotation: r, translation: t }, Vec::new(), 0, false)
    };
    let pose = RelativePose {
        rotation: pose.rotation,
        translation: resolve_translation_sign(set, &pose.rotation, &pose.translation),
    };
    let final_energy = pnec_energy(set, &pose.rotation, &pose.translation, reg)?;
    Ok(EstimateReport {
        pose,
        final_energy,
        stage1_energy,
        rounds,
        lm_trace,
        lm_iterations,
        stalled,
        refinement_no_progress: no_progress,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// NEC baseline: LM on `λ_min(M(R))` from `r_init`, translation from the eigenvector.
pub fn nec_estimate(
    set: &[BearingPair],
    config: &SolverConfig,
    r_init: &Rotation3,
) -> Result<EstimateReport> {
    let start = Instant::now();
    config.validate()?;
    check_nondegenerate(set)?;
    let weights = vec![1.0; set.len()];
    let rot = rotation_step(set, &weights, r_init, config)?;
    let (t, lambda) = nec_translation(set, &rot.rotation);
    let t = resolve_translation_sign(set, &rot.rotation, &t);
    Ok(EstimateReport {
        pose: RelativePose { rotation: rot.rotation, translation: t },
        final_energy: lambda,
        stage1_energy: lambda,
        rounds: Vec::new(),
        lm_trace: rot.trace,
        lm_iterations: rot.iterations,
        stalled: rot.stalled,
        refinement_no_progress: false,
        wall_time: start.elapsed().as_secs_f64(),
    })
}

/// `λ_min(M_P(R))` for the given weights.
pub fn weighted_lambda_min(set: &[BearingPair], r: &Rotation3, weights: &[f64]) -> Result<f64> {
    let m = weighted_gram(set, r, weights)?;
    Ok(crate::eigen::SymEigen3::new(&m).min_value())
}
