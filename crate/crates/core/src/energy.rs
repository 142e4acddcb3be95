//! NEC and PNEC residuals, energies and Gramians.
//!
//! For a correspondence `(f, f', Σ)` and relative pose `(R, t)` the epipolar normal is
//! `n = f × R f'`, the NEC residual is `tᵀn` and its propagated variance is
//! `σ'² = tᵀ Σₙ t + c` with `Σₙ = [f]x R Σ Rᵀ [f]xᵀ`.

use std::ops::Deref;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{skew, unit_from_vector, Rotation3, UnitVector3};
use crate::uncertainty::{is_psd, Cov3D};

pub const MIN_CORRESPONDENCES: usize = 5;
pub const DEFAULT_REGULARIZATION: f64 = 1e-10;
/// Residual variances below this are treated as a genuine singularity.
pub const SINGULARITY_GUARD: f64 = 1e-300;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BearingPair {
    pub f_host: UnitVector3,
    pub f_target: UnitVector3,
    pub cov_target: Cov3D,
}

impl BearingPair {
    pub fn new(f_host: UnitVector3, f_target: UnitVector3, cov_target: Cov3D) -> Result<Self> {
        if !is_psd(&cov_target) {
            return Err(Error::InvalidCovariance(format!("{cov_target:?}")));
        }
        Ok(Self { f_host, f_target, cov_target })
    }

    /// Validates unit norms as well as the covariance.
    pub fn from_vectors(f_host: Vector3<f64>, f_target: Vector3<f64>, cov: Cov3D) -> Result<Self> {
        Self::new(unit_from_vector(f_host)?, unit_from_vector(f_target)?, cov)
    }
}

/// At least five bearing pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<BearingPair>", into = "Vec<BearingPair>")]
pub struct CorrespondenceSet(Vec<BearingPair>);

impl CorrespondenceSet {
    pub fn new(pairs: Vec<BearingPair>) -> Result<Self> {
        if pairs.len() < MIN_CORRESPONDENCES {
            return Err(Error::TooFewCorrespondences {
                needed: MIN_CORRESPONDENCES,
                got: pairs.len(),
            });
        }
        Ok(Self(pairs))
    }

    pub fn pairs(&self) -> &[BearingPair] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<BearingPair> {
        self.0
    }
}

impl Deref for CorrespondenceSet {
    type Target = [BearingPair];

    fn deref(&self) -> &[BearingPair] {
        &self.0
    }
}

impl TryFrom<Vec<BearingPair>> for CorrespondenceSet {
    type Error = Error;

    fn try_from(pairs: Vec<BearingPair>) -> Result<Self> {
        Self::new(pairs)
    }
}

impl From<CorrespondenceSet> for Vec<BearingPair> {
    fn from(set: CorrespondenceSet) -> Self {
        set.0
    }
}

/// Additive variance `c` in `σ'² = σ² + c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regularization(f64);

impl Regularization {
    pub fn new(c: f64) -> Result<Self> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(Error::InvalidArgument(format!("regularization must be >= 0, got {c}")));
        }
        Ok(Self(c))
    }

    pub fn value(&self) -> f64 {
        self.0
    }
}

impl Default for Regularization {
    fn default() -> Self {
        Self(DEFAULT_REGULARIZATION)
    }
}

/// Sum with pairwise (cascade) reduction, independent of thread count.
pub(crate) fn pairwise_sum(values: &[f64]) -> f64 {
    match values.len() {
        0 => 0.0,
        1 => values[0],
        2 => values[0] + values[1],
        n => {
            let (a, b) = values.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

pub fn epipolar_normal(pair: &BearingPair, r: &Rotation3) -> Vector3<f64> {
    pair.f_host.cross(&(r * pair.f_target.into_inner()))
}

pub fn nec_residual(t: &UnitVector3, n: &Vector3<f64>) -> f64 {
    t.dot(n).abs()
}

pub fn nec_energy(set: &[BearingPair], r: &Rotation3, t: &UnitVector3) -> f64 {
    let terms: Vec<f64> = set
        .iter()
        .map(|p| nec_residual(t, &epipolar_normal(p, r)).powi(2))
        .collect();
    pairwise_sum(&terms)
}

pub fn gram_matrix(set: &[BearingPair], r: &Rotation3) -> Matrix3<f64> {
    set.iter().fold(Matrix3::zeros(), |acc, p| {
        let n = epipolar_normal(p, r);
        acc + n * n.transpose()
    })
}

/// `Σₙ = [f]x R Σ Rᵀ [f]xᵀ`, the covariance of the epipolar normal.
pub fn normal_covariance(pair: &BearingPair, r: &Rotation3) -> Cov3D {
    let a = skew(&pair.f_host) * r.matrix();
    let s = a * pair.cov_target * a.transpose();
    (s + s.transpose()) * 0.5
}

pub fn residual_variance(
    pair: &BearingPair,
    r: &Rotation3,
    t: &UnitVector3,
    reg: Regularization,
) -> f64 {
    // tᵀ[f]x = -(f × t)ᵀ, so σ² = gᵀ Σ g with g = Rᵀ (f × t).
    let g = r.transpose() * pair.f_host.cross(t);
    let sigma2 = g.dot(&(pair.cov_target * g)).max(0.0);
    sigma2 + reg.value()
}

pub fn pnec_energy(
    set: &[BearingPair],
    r: &Rotation3,
    t: &UnitVector3,
    reg: Regularization,
) -> Result<f64> {
    let mut terms = Vec::with_capacity(set.len());
    for p in set {
        let var = residual_variance(p, r, t, reg);
        if var < SINGULARITY_GUARD {
            return Err(Error::Singularity(var));
        }
        terms.push(t.dot(&epipolar_normal(p, r)).powi(2) / var);
    }
    Ok(pairwise_sum(&terms))
}

/// `M_P = Σ nᵢ nᵢᵀ / σ̃ᵢ²`.
pub fn weighted_gram(set: &[BearingPair], r: &Rotation3, weights: &[f64]) -> Result<Matrix3<f64>> {
    if weights.len() != set.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} correspondences",
            weights.len(),
            set.len()
        )));
    }
    check_weights(weights)?;
    Ok(set.iter().zip(weights).fold(Matrix3::zeros(), |acc, (p, w)| {
        let n = epipolar_normal(p, r);
        acc + n * n.transpose() / (w * w)
    }))
}

pub(crate) fn check_weights(weights: &[f64]) -> Result<()> {
    match weights.iter().position(|w| !(w.is_finite() && *w > 0.0)) {
        Some(index) => Err(Error::InvalidWeight { index, value: weights[index] }),
        None => Ok(()),
    }
}

/// Limit of the unregularized squared residual `e²/σ²` as `t → f` along the great
/// circle whose cross-product axis with `f` is `k` (`k ⊥ f`).
pub fn directional_limit(k: &UnitVector3, pair: &BearingPair, r: &Rotation3) -> Result<f64> {
    let rtk = r.transpose() * k.into_inner();
    let denom = rtk.dot(&(pair.cov_target * rtk));
    if denom.abs() <= SINGULARITY_GUARD {
        return Err(Error::UndefinedLimit);
    }
    Ok(k.dot(&(r * pair.f_target.into_inner())).powi(2) / denom)
}
