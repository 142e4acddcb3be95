//! Translation step: Fibonacci-lattice start and self-consistent-field iteration on
//! the sum of generalized Rayleigh quotients `Σ tᵀAᵢt / tᵀBᵢt`.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Matrix3, Unit, Vector2, Vector3};

use super::SolverConfig;
use crate::eigen::SymEigen3;
use crate::energy::{epipolar_normal, gram_matrix, normal_covariance, pairwise_sum, BearingPair};
use crate::error::{Error, Result};
use crate::geometry::{Rotation3, UnitVector3};

/// `K` quasi-uniform points on the unit sphere, `y` running from 1 to -1.
pub fn fibonacci_lattice(k: usize) -> Result<Vec<UnitVector3>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!("lattice needs K >= 2, got {k}")));
    }
    let golden = PI * (3.0 - 5f64.sqrt());
    Ok((0..k)
        .map(|i| {
            let y = 1.0 - 2.0 * i as f64 / (k - 1) as f64;
            let r = (1.0 - y * y).max(0.0).sqrt();
            let (s, c) = (i as f64 * golden).sin_cos();
            Unit::new_unchecked(Vector3::new(r * c, y, r * s))
        })
        .collect())
}

/// Per-correspondence `Aᵢ = nᵢnᵢᵀ` and `Bᵢ = Σₙ,ᵢ + cI` at a fixed rotation.
struct Quotients {
    normals: Vec<Vector3<f64>>,
    b: Vec<Matrix3<f64>>,
}

impl Quotients {
    fn new(set: &[BearingPair], r: &Rotation3, c: f64) -> Self {
        Self {
            normals: set.iter().map(|p| epipolar_normal(p, r)).collect(),
            b: set
                .iter()
                .map(|p| normal_covariance(p, r) + Matrix3::identity() * c)
                .collect(),
        }
    }

    fn denominators(&self, t: &Vector3<f64>) -> Result<Vec<f64>> {
        self.b
            .iter()
            .map(|b| {
                let d = t.dot(&(b * t));
                if d < crate::energy::SINGULARITY_GUARD {
                    Err(Error::Singularity(d))
                } else {
                    Ok(d)
                }
            })
            .collect()
    }

    fn energy(&self, t: &Vector3<f64>) -> Result<f64> {
        let den = self.denominators(t)?;
        let terms: Vec<f64> = self
            .normals
            .iter()
            .zip(&den)
            .map(|(n, d)| t.dot(n).powi(2) / d)
            .collect();
        Ok(pairwise_sum(&terms))
    }

    fn e_matrix(&self, t: &Vector3<f64>) -> Result<Matrix3<f64>> {
        let den = self.denominators(t)?;
        let mut e = Matrix3::zeros();
        for ((n, b), tbt) in self.normals.iter().zip(&self.b).zip(&den) {
            let tat = t.dot(n).powi(2);
            e += (n * n.transpose() * *tbt - b * tat) / (tbt * tbt);
        }
        Ok((e + e.transpose()) * 0.5)
    }
}

/// `E = Σ wᵢ (tᵀBᵢt·Aᵢ − tᵀAᵢt·Bᵢ)` with `wᵢ = (tᵀBᵢt)⁻²`.
///
/// `2Et` is the Euclidean gradient of the PNEC energy in `t` and `tᵀEt = 0`.
pub fn scf_e_matrix(
    set: &[BearingPair],
    r: &Rotation3,
    t: &UnitVector3,
    c: f64,
) -> Result<Matrix3<f64>> {
    Quotients::new(set, r, c).e_matrix(t)
}

/// `‖Et − (tᵀEt)t‖`, zero exactly at SCF fixed points.
pub fn scf_residual(set: &[BearingPair], r: &Rotation3, t: &UnitVector3, c: f64) -> Result<f64> {
    let e = scf_e_matrix(set, r, t, c)?;
    let et = e * t.into_inner();
    Ok((et - t.into_inner() * t.dot(&et)).norm())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScfOutcome {
    pub translation: UnitVector3,
    /// PNEC energy at `translation`.
    pub energy: f64,
    /// Energy of the best start candidate.
    pub start_energy: f64,
    pub iterations: usize,
}

/// Lattice start followed by `scf_iterations` SCF steps.
pub fn scf_optimize(set: &[BearingPair], r: &Rotation3, config: &SolverConfig) -> Result<UnitVector3> {
    config.validate()?;
    let lattice = fibonacci_lattice(config.lattice_points)?;
    Ok(scf_optimize_from(set, r, config, &lattice, None)?.translation)
}

/// Step lengths tried along a rejected update before giving up.
const BACKTRACK_STEPS: usize = 30;
/// Newton iterations that polish the SCF result onto the stationarity condition.
const POLISH_ITERATIONS: usize = 20;
const POLISH_STEP: f64 = 1e-6;

/// Monotone acceptance with a roundoff allowance that never lets the energy
/// climb more than `1e-12` above the start.
fn acceptable(e_new: f64, e_cur: f64, start: f64) -> bool {
    e_new < e_cur || (e_new <= e_cur + 1e-13 * e_cur.max(1.0) && e_new <= start + 1e-12)
}

fn tangent_basis(t: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let seed = if t.x.abs() < 0.6 { Vector3::x() } else { Vector3::y() };
    let b1 = (seed - t * t.dot(&seed)).normalize();
    (b1, t.cross(&b1))
}

/// SCF from the lowest-energy point among `lattice` and the optional warm start.
///
/// Each step moves `t` to the eigenvector of `E(t)` with the smallest eigenvalue,
/// backtracking along the arc toward it when the full step raises the energy. A
/// few safeguarded Newton steps on `Et = 0` then remove the slow two-cycle the
/// plain iteration can fall into. The energy never exceeds the start by more
/// than `1e-12`.
pub fn scf_optimize_from(
    set: &[BearingPair],
    r: &Rotation3,
    config: &SolverConfig,
    lattice: &[UnitVector3],
    warm_start: Option<&UnitVector3>,
) -> Result<ScfOutcome> {
    let q = Quotients::new(set, r, config.regularization);
    let mut best: Option<(Vector3<f64>, f64)> = None;
    for cand in lattice.iter().chain(warm_start) {
        let e = q.energy(cand)?;
        // Strict comparison keeps the lowest index on ties.
        if best.is_none_or(|(_, be)| e < be) {
            best = Some((cand.into_inner(), e));
        }
    }
    let (mut t, start_energy) =
        best.ok_or_else(|| Error::InvalidArgument("no SCF start candidates".into()))?;
    let mut energy = start_energy;
    let mut iterations = 0;
    for _ in 0..config.scf_iterations {
        let e = q.e_matrix(&t)?;
        if !e.iter().all(|x| x.is_finite()) {
            return Err(Error::Numeric { context: "scf", detail: format!("non-finite E {e:?}") });
        }
        let mut next = SymEigen3::new(&e).min_vector();
        if next.dot(&t) < 0.0 {
            next = -next;
        }
        iterations += 1;
        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..BACKTRACK_STEPS {
            let cand = (t + (next - t) * alpha).normalize();
            let ec = q.energy(&cand)?;
            if acceptable(ec, energy, start_energy) {
                accepted = Some((cand, ec));
                break;
            }
            alpha *= 0.5;
        }
        let Some((cand, ec)) = accepted else { break };
        let moved = (cand - t).norm();
        t = cand;
        energy = ec;
        if moved < 1e-15 {
            break;
        }
    }
    (t, energy) = polish(&q, t, energy, start_energy)?;
    Ok(ScfOutcome {
        translation: Unit::new_normalize(t),
        energy,
        start_energy,
        iterations,
    })
}

/// Tangent-plane Newton iteration on the stationarity condition `Et = 0`, with
/// the Hessian from central differences and energy-safeguarded backtracking.
fn polish(
    q: &Quotients,
    mut t: Vector3<f64>,
    mut energy: f64,
    start: f64,
) -> Result<(Vector3<f64>, f64)> {
    let residual = |t: &Vector3<f64>| -> Result<Vector3<f64>> { Ok(q.e_matrix(t)? * t) };
    let mut res = residual(&t)?;
    for _ in 0..POLISH_ITERATIONS {
        let (b1, b2) = tangent_basis(&t);
        let grad = |v: &Vector3<f64>| -> Result<Vector2<f64>> {
            let et = residual(v)?;
            Ok(Vector2::new(b1.dot(&et), b2.dot(&et)))
        };
        let g = Vector2::new(b1.dot(&res), b2.dot(&res));
        if g.norm() == 0.0 {
            break;
        }
        let mut h = Matrix2::zeros();
        for (j, b) in [b1, b2].iter().enumerate() {
            let gp = grad(&(t + b * POLISH_STEP).normalize())?;
            let gm = grad(&(t - b * POLISH_STEP).normalize())?;
            h.set_column(j, &((gp - gm) / (2.0 * POLISH_STEP)));
        }
        let h = (h + h.transpose()) * 0.5;
        let dir = match h.cholesky() {
            Some(ch) => ch.solve(&-g),
            None => -g / h.norm().max(f64::MIN_POSITIVE),
        };
        let mut accepted = None;
        let mut alpha = 1.0;
        for _ in 0..BACKTRACK_STEPS {
            let cand = (t + (b1 * dir.x + b2 * dir.y) * alpha).normalize();
            let ec = q.energy(&cand)?;
            let rc = residual(&cand)?;
            if ec < energy || (acceptable(ec, energy, start) && rc.norm() < res.norm()) {
                accepted = Some((cand, ec, rc));
                break;
            }
            alpha *= 0.5;
        }
        let Some((cand, ec, rc)) = accepted else { break };
        t = cand;
        energy = ec;
        res = rc;
    }
    Ok((t, energy))
}

/// Eigenvector and eigenvalue of `λ_min(M(R))`.
///
/// The eigenvalue is reported as `Σ (vᵀnᵢ)²`, which keeps full relative precision
/// when `M` is nearly singular.
pub fn nec_translation(set: &[BearingPair], r: &Rotation3) -> (UnitVector3, f64) {
    let m = gram_matrix(set, r);
    let v = SymEigen3::new(&m).min_vector();
    let t = Unit::new_normalize(v);
    let terms: Vec<f64> = set.iter().map(|p| t.dot(&epipolar_normal(p, r)).powi(2)).collect();
    (t, pairwise_sum(&terms))
}
