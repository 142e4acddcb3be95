//! Propagation of 2D feature-position covariances onto the unit sphere with the
//! unscented transform, for pinhole and omnidirectional cameras.

use nalgebra::{DMatrix, Matrix2, Matrix3, SMatrix, SVector, Unit, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Rotation3, UnitVector3};

/// 2×2 position covariance (pixel² for pinhole, tangent-plane units for omni).
pub type Cov2D = Matrix2<f64>;
/// 3×3 covariance of a unit bearing vector.
pub type Cov3D = Matrix3<f64>;

pub const DEFAULT_KAPPA: f64 = 1.0;
/// Antipode exclusion for [`omni_alignment_rotation`]: requires `μ₃ > -1 + 1e-6`.
pub const ALIGNMENT_DEGENERACY: f64 = 1e-6;
const CHOLESKY_JITTER: f64 = 1e-14;
const CHOLESKY_RETRIES: usize = 3;

/// Symmetric within 1e-12 (relative to the largest entry) with eigenvalues ≥ -1e-12.
pub fn is_psd<const N: usize>(cov: &SMatrix<f64, N, N>) -> bool {
    if !cov.iter().all(|x| x.is_finite()) {
        return false;
    }
    let scale = cov.amax().max(1.0);
    if (cov - cov.transpose()).amax() > 1e-12 * scale {
        return false;
    }
    let sym = (cov + cov.transpose()) * 0.5;
    DMatrix::from_iterator(N, N, sym.iter().copied())
        .symmetric_eigenvalues()
        .iter()
        .all(|&l| l >= -1e-12 * scale)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SigmaPointSet<const N: usize> {
    pub points: Vec<SVector<f64, N>>,
    pub weights: Vec<f64>,
}

/// Lower-triangular factor `C` with `C Cᵀ = cov`, tolerating semidefinite input.
///
/// Zero pivots are accepted when the rest of their column vanishes as well. If the
/// factorization still fails, a diagonal jitter of `1e-14 · scale` (growing tenfold)
/// is tried a bounded number of times before reporting an invalid covariance.
pub fn psd_cholesky<const N: usize>(cov: &SMatrix<f64, N, N>) -> Result<SMatrix<f64, N, N>> {
    if !cov.iter().all(|x| x.is_finite()) {
        return Err(Error::InvalidCovariance("non-finite entries".into()));
    }
    let scale = cov.amax();
    if scale == 0.0 {
        return Ok(SMatrix::zeros());
    }
    let sym = (cov + cov.transpose()) * 0.5;
    if let Some(c) = semidefinite_cholesky(&sym, 1e-13 * scale) {
        return Ok(c);
    }
    let mut jitter = CHOLESKY_JITTER * scale;
    for _ in 0..CHOLESKY_RETRIES {
        let jittered = sym + SMatrix::<f64, N, N>::identity() * jitter;
        if let Some(c) = semidefinite_cholesky(&jittered, 1e-13 * scale) {
            return Ok(c);
        }
        jitter *= 10.0;
    }
    Err(Error::InvalidCovariance(format!("cholesky failed for {sym:?}")))
}

fn semidefinite_cholesky<const N: usize>(
    a: &SMatrix<f64, N, N>,
    tol: f64,
) -> Option<SMatrix<f64, N, N>> {
    let mut l = SMatrix::<f64, N, N>::zeros();
    for j in 0..N {
        let d = a[(j, j)] - (0..j).map(|k| l[(j, k)].powi(2)).sum::<f64>();
        if d > tol {
            let ljj = d.sqrt();
            l[(j, j)] = ljj;
            for i in j + 1..N {
                let s = a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
                l[(i, j)] = s / ljj;
            }
        } else if d >= -tol {
            for i in j + 1..N {
                let s = a[(i, j)] - (0..j).map(|k| l[(i, k)] * l[(j, k)]).sum::<f64>();
                // |a_ij|² ≤ a_ii a_jj for PSD input, so a vanishing pivot bounds its column.
                if s * s > tol * a[(i, i)].abs().max(tol) {
                    return None;
                }
            }
        } else {
            return None;
        }
    }
    Some(l)
}

/// `2n + 1` symmetric sigma points with `w₀ = κ/(n+κ)` and `wᵢ = 1/(2(n+κ))`.
pub fn sigma_points<const N: usize>(
    mu: &SVector<f64, N>,
    cov: &SMatrix<f64, N, N>,
    kappa: f64,
) -> Result<SigmaPointSet<N>> {
    let spread = N as f64 + kappa;
    if spread <= 0.0 {
        return Err(Error::InvalidArgument(format!("n + kappa must be positive, got {spread}")));
    }
    let c = psd_cholesky(cov)?;
    let offsets: Vec<_> = (0..N).map(|i| c.column(i) * spread.sqrt()).collect();
    Ok(spread_points(mu, &offsets, spread, kappa))
}

fn spread_points<const N: usize>(
    mu: &SVector<f64, N>,
    offsets: &[SVector<f64, N>],
    spread: f64,
    kappa: f64,
) -> SigmaPointSet<N> {
    let n = offsets.len();
    let mut points = Vec::with_capacity(2 * n + 1);
    let mut weights = Vec::with_capacity(2 * n + 1);
    points.push(*mu);
    weights.push(kappa / spread);
    for off in offsets {
        points.push(mu + off);
        weights.push(0.5 / spread);
    }
    for off in offsets {
        points.push(mu - off);
        weights.push(0.5 / spread);
    }
    SigmaPointSet { points, weights }
}

/// Weighted mean and scatter of mapped sigma points.
fn moments<const M: usize>(
    points: &[SVector<f64, M>],
    weights: &[f64],
) -> (SVector<f64, M>, SMatrix<f64, M, M>) {
    // Accumulate offsets from the first (central) point so coincident points have
    // exactly zero spread.
    let origin = points[0];
    let mean = origin
        + points
            .iter()
            .zip(weights)
            .fold(SVector::<f64, M>::zeros(), |acc, (p, w)| acc + (p - origin) * *w);
    let cov = points
        .iter()
        .zip(weights)
        .fold(SMatrix::<f64, M, M>::zeros(), |acc, (p, w)| {
            let d = p - mean;
            acc + d * d.transpose() * *w
        });
    (mean, (cov + cov.transpose()) * 0.5)
}

/// Mean and covariance recovered from a sigma point set before any nonlinear map.
pub fn reconstruct_moments<const N: usize>(
    set: &SigmaPointSet<N>,
) -> (SVector<f64, N>, SMatrix<f64, N, N>) {
    moments(&set.points, &set.weights)
}

/// Inverse camera matrix mapping homogeneous pixels to normalized image coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub inverse_camera_matrix: Matrix3<f64>,
}

impl CameraIntrinsics {
    /// From an upper-triangular camera matrix with positive diagonal.
    pub fn new(k: Matrix3<f64>) -> Result<Self> {
        let upper = k[(1, 0)] == 0.0 && k[(2, 0)] == 0.0 && k[(2, 1)] == 0.0;
        let positive = (0..3).all(|i| k[(i, i)] > 0.0);
        if !upper || !positive {
            return Err(Error::InvalidArgument(
                "camera matrix must be upper triangular with positive diagonal".into(),
            ));
        }
        let inverse_camera_matrix = k
            .try_inverse()
            .ok_or_else(|| Error::InvalidArgument("singular camera matrix".into()))?;
        Ok(Self { inverse_camera_matrix })
    }

    pub fn pinhole(fx: f64, fy: f64, cx: f64, cy: f64) -> Result<Self> {
        Self::new(Matrix3::new(fx, 0.0, cx, 0.0, fy, cy, 0.0, 0.0, 1.0))
    }

    pub fn camera_matrix(&self) -> Matrix3<f64> {
        self.inverse_camera_matrix
            .try_inverse()
            .expect("inverse camera matrix is invertible by construction")
    }

    /// Bearing of a pixel: `normalize(K⁻¹ (u, v, 1))`.
    pub fn unproject(&self, pixel: &Vector2<f64>) -> UnitVector3 {
        Unit::new_normalize(self.inverse_camera_matrix * Vector3::new(pixel.x, pixel.y, 1.0))
    }

    /// Pixel of a point in front of the camera (`z > 0`).
    pub fn project(&self, p: &Vector3<f64>) -> Option<Vector2<f64>> {
        if p.z <= 0.0 {
            return None;
        }
        let h = self.camera_matrix() * (p / p.z);
        Some(Vector2::new(h.x, h.y))
    }
}

/// Bearing and bearing covariance of a pixel measurement with covariance `cov`.
///
/// The returned bearing is the renormalized weighted mean of the mapped sigma points.
pub fn unscented_pinhole(
    pixel: &Vector2<f64>,
    cov: &Cov2D,
    camera: &CameraIntrinsics,
    kappa: f64,
) -> Result<(UnitVector3, Cov3D)> {
    let set = sigma_points(pixel, cov, kappa)?;
    let mapped: Vec<Vector3<f64>> = set
        .points
        .iter()
        .map(|p| camera.unproject(p).into_inner())
        .collect();
    let (mean, cov3) = moments(&mapped, &set.weights);
    Ok((Unit::new_normalize(mean), cov3))
}

/// Rotation taking the unit vector `mu` to the z-axis (and its tangent plane to the
/// xy-plane).
pub fn omni_alignment_rotation(mu: &UnitVector3) -> Result<Rotation3> {
    let (m1, m2, m3) = (mu.x, mu.y, mu.z);
    if m3 <= -1.0 + ALIGNMENT_DEGENERACY {
        return Err(Error::DegenerateAlignment([m1, m2, m3]));
    }
    let norm = mu.norm();
    let d = 1.0 + m3;
    let m = Matrix3::new(
        norm - m1 * m1 / (norm + m3),
        -m1 * m2 / d,
        -m1,
        -m1 * m2 / d,
        norm - m2 * m2 / (norm + m3),
        -m2,
        m1,
        m2,
        m3,
    ) / norm;
    Ok(Rotation3::from_matrix_unchecked(m))
}

/// Bearing covariance for an omnidirectional measurement with tangent-plane
/// covariance `cov2d` at `mu`.
pub fn unscented_omni(mu: &UnitVector3, cov2d: &Cov2D, kappa: f64) -> Result<Cov3D> {
    let align = omni_alignment_rotation(mu)?;
    let spread = 2.0 + kappa;
    if spread <= 0.0 {
        return Err(Error::InvalidArgument(format!("n + kappa must be positive, got {spread}")));
    }
    let c = psd_cholesky(cov2d)?;
    let lift = |col: Vector2<f64>| align.transpose() * Vector3::new(col.x, col.y, 0.0);
    let offsets: Vec<Vector3<f64>> = (0..2)
        .map(|i| lift(c.column(i).into_owned()) * spread.sqrt())
        .collect();
    let set = spread_points(&mu.into_inner(), &offsets, spread, kappa);
    let mapped: Vec<Vector3<f64>> = set.points.iter().map(|p| p.normalize()).collect();
    let (_, cov3) = moments(&mapped, &set.weights);
    Ok(cov3)
}
