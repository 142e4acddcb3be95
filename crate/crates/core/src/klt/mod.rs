//! Feature-position covariance from the normalized-SSD KLT energy.
//!
//! The Gauss-Newton Hessian of the mean-normalized patch energy, taken in the host
//! frame with respect to an SE(2) warp, is inverted to obtain a Laplace covariance
//! over `(u, v, θ)`. Its positional marginal, rotated into the target frame, is the
//! 2D covariance consumed by the uncertainty propagation.

mod pgm;

pub use pgm::{parse_pgm, read_pgm};

use nalgebra::{Matrix2, Matrix3, Rotation2, RowVector3, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::uncertainty::Cov2D;

/// Relative Tikhonov damping applied when the Hessian is singular.
pub const TIKHONOV_DAMPING: f64 = 1e-8;
const SINGULAR_RATIO: f64 = 1e-12;

/// Grayscale image patch, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Patch {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width < 3 || height < 3 {
            return Err(Error::InvalidArgument(format!(
                "patch must be at least 3x3, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidArgument(format!(
                "expected {} intensities, got {}",
                width * height,
                data.len()
            )));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite intensity".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let data = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Geometric center, the origin of pattern offsets.
    pub fn center(&self) -> Vector2<f64> {
        Vector2::new((self.width - 1) as f64 / 2.0, (self.height - 1) as f64 / 2.0)
    }

    pub fn at(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    fn out_of_bounds(&self, x: f64, y: f64) -> Error {
        Error::OutOfBounds { x, y, width: self.width, height: self.height }
    }

    /// Bilinear interpolation; `(x, y)` must lie within `[0, w-1] × [0, h-1]`.
    pub fn sample(&self, x: f64, y: f64) -> Result<f64> {
        let (w, h) = ((self.width - 1) as f64, (self.height - 1) as f64);
        if !(0.0..=w).contains(&x) || !(0.0..=h).contains(&y) {
            return Err(self.out_of_bounds(x, y));
        }
        let x0 = (x.floor() as usize).min(self.width - 2);
        let y0 = (y.floor() as usize).min(self.height - 2);
        let (ax, ay) = (x - x0 as f64, y - y0 as f64);
        let top = self.at(x0, y0) * (1.0 - ax) + self.at(x0 + 1, y0) * ax;
        let bottom = self.at(x0, y0 + 1) * (1.0 - ax) + self.at(x0 + 1, y0 + 1) * ax;
        Ok(top * (1.0 - ay) + bottom * ay)
    }

    /// Central-difference gradient at an interior pixel.
    fn grid_gradient(&self, x: usize, y: usize) -> Vector2<f64> {
        Vector2::new(
            (self.at(x + 1, y) - self.at(x - 1, y)) / 2.0,
            (self.at(x, y + 1) - self.at(x, y - 1)) / 2.0,
        )
    }

    /// Gradient bilinearly interpolated from central differences; boundary pixels
    /// have no central difference, so `(x, y)` must lie in `[1, w-2] × [1, h-2]`.
    pub fn gradient(&self, x: f64, y: f64) -> Result<Vector2<f64>> {
        let (w, h) = ((self.width - 2) as f64, (self.height - 2) as f64);
        if !(1.0..=w).contains(&x) || !(1.0..=h).contains(&y) {
            return Err(self.out_of_bounds(x, y));
        }
        let x0 = (x.floor() as usize).min(self.width - 3).max(1);
        let y0 = (y.floor() as usize).min(self.height - 3).max(1);
        if self.width == 3 || self.height == 3 {
            return Ok(self.grid_gradient(1, 1));
        }
        let (ax, ay) = (x - x0 as f64, y - y0 as f64);
        let top = self.grid_gradient(x0, y0) * (1.0 - ax) + self.grid_gradient(x0 + 1, y0) * ax;
        let bottom =
            self.grid_gradient(x0, y0 + 1) * (1.0 - ax) + self.grid_gradient(x0 + 1, y0 + 1) * ax;
        Ok(top * (1.0 - ay) + bottom * ay)
    }
}

/// Pixel offsets relative to the patch center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pattern {
    offsets: Vec<Vector2<f64>>,
}

impl Pattern {
    pub fn new(offsets: Vec<Vector2<f64>>) -> Result<Self> {
        if offsets.len() < 3 {
            return Err(Error::InvalidArgument(format!(
                "pattern needs at least 3 offsets, got {}",
                offsets.len()
            )));
        }
        if !offsets.iter().all(|o| o.iter().all(|v| v.is_finite())) {
            return Err(Error::InvalidArgument("non-finite pattern offset".into()));
        }
        Ok(Self { offsets })
    }

    pub fn offsets(&self) -> &[Vector2<f64>] {
        &self.offsets
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }
}

impl Default for Pattern {
    /// 52 offsets: the 8×8 half-integer grid `±0.5..±3.5` with the three outermost
    /// cells of every corner removed. Fits a 10×10 patch with a one-pixel border.
    fn default() -> Self {
        let coords: Vec<f64> = (0..8).map(|i| i as f64 - 3.5).collect();
        let offsets = coords
            .iter()
            .flat_map(|&y| coords.iter().map(move |&x| Vector2::new(x, y)))
            .filter(|p| p.x.abs() + p.y.abs() < 6.0)
            .collect();
        Self { offsets }
    }
}

/// SE(2) warp `p ↦ R(θ) p + (tx, ty)` on pattern offsets.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Se2 {
    pub tx: f64,
    pub ty: f64,
    pub theta: f64,
}

impl Se2 {
    pub fn apply(&self, p: &Vector2<f64>) -> Vector2<f64> {
        Rotation2::new(self.theta) * p + Vector2::new(self.tx, self.ty)
    }
}

/// Laplace covariance over `(u px, v px, θ rad)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Se2Covariance {
    pub matrix: Matrix3<f64>,
    /// Set when the Hessian was singular and had to be damped before inversion.
    pub regularized: bool,
}

pub fn klt_energy(host: &Patch, target: &Patch, transform: &Se2, pattern: &Pattern) -> Result<f64> {
    let (ch, ct) = (host.center(), target.center());
    let mut ih = Vec::with_capacity(pattern.len());
    let mut it = Vec::with_capacity(pattern.len());
    for p in pattern.offsets() {
        ih.push(host.sample(ch.x + p.x, ch.y + p.y)?);
        let q = ct + transform.apply(p);
        it.push(target.sample(q.x, q.y)?);
    }
    let n = pattern.len() as f64;
    let (mh, mt) = (ih.iter().sum::<f64>() / n, it.iter().sum::<f64>() / n);
    if mh <= 0.0 || mt <= 0.0 {
        return Err(Error::InvalidArgument("mean patch intensity must be positive".into()));
    }
    Ok(ih.iter().zip(&it).map(|(a, b)| (a / mh - b / mt).powi(2)).sum())
}

/// Per-offset Jacobians of the normalized residual w.r.t. `(u, v, θ)`.
pub fn se2_jacobians(host: &Patch, pattern: &Pattern) -> Result<Vec<RowVector3<f64>>> {
    let c = host.center();
    let mut intensity = Vec::with_capacity(pattern.len());
    let mut warped_grad = Vec::with_capacity(pattern.len());
    for p in pattern.offsets() {
        let (x, y) = (c.x + p.x, c.y + p.y);
        intensity.push(host.sample(x, y)?);
        let g = host.gradient(x, y)?;
        let j_xi = nalgebra::Matrix2x3::new(1.0, 0.0, -p.y, 0.0, 1.0, p.x);
        warped_grad.push(g.transpose() * j_xi);
    }
    let sum_i: f64 = intensity.iter().sum();
    if sum_i <= 0.0 {
        return Err(Error::InvalidArgument("mean patch intensity must be positive".into()));
    }
    let sum_g = warped_grad.iter().fold(RowVector3::zeros(), |acc, g| acc + g);
    let n = pattern.len() as f64;
    Ok(intensity
        .iter()
        .zip(&warped_grad)
        .map(|(i, g)| (g * sum_i - sum_g * *i) * n / (sum_i * sum_i))
        .collect())
}

pub fn se2_covariance(host: &Patch, pattern: &Pattern) -> Result<Se2Covariance> {
    let h = se2_jacobians(host, pattern)?
        .iter()
        .fold(Matrix3::zeros(), |acc, j| acc + j.transpose() * j);
    let trace = h.trace();
    if !(trace > f64::MIN_POSITIVE) {
        return Err(Error::DegeneratePatch);
    }
    let eig = crate::eigen::SymEigen3::new(&h);
    let singular = eig.min_value() <= SINGULAR_RATIO * eig.max_value();
    let damped = if singular {
        h + Matrix3::identity() * (TIKHONOV_DAMPING * trace / 3.0)
    } else {
        h
    };
    let inv = damped
        .cholesky()
        .ok_or(Error::DegeneratePatch)?
        .inverse();
    Ok(Se2Covariance {
        matrix: (inv + inv.transpose()) * 0.5,
        regularized: singular,
    })
}

/// Positional marginal of `se2` rotated by `theta` into the target frame.
pub fn position_covariance_in_target(se2: &Se2Covariance, theta: f64) -> Cov2D {
    let marginal: Matrix2<f64> = se2.matrix.fixed_view::<2, 2>(0, 0).into_owned();
    let r = Rotation2::new(theta).into_inner();
    let out = r * marginal * r.transpose();
    (out + out.transpose()) * 0.5
}
