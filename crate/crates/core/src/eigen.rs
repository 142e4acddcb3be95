//! Closed-form eigen-decomposition of symmetric 3×3 matrices.
//!
//! Eigenvalues come from the trigonometric solution of the characteristic cubic and
//! eigenvectors from cross products of rows of `A - λI`. If the eigen-residual of
//! the closed form exceeds [`RESIDUAL_TOLERANCE`] (relative to the matrix scale) the
//! decomposition is recomputed with nalgebra's iterative symmetric solver.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Vector3};

/// Relative residual above which the iterative fallback is used.
pub const RESIDUAL_TOLERANCE: f64 = 1e-9;

/// Eigenpairs sorted by ascending eigenvalue; `vectors.column(k)` pairs with `values[k]`.
#[derive(Debug, Clone, Copy)]
pub struct SymEigen3 {
    pub values: Vector3<f64>,
    pub vectors: Matrix3<f64>,
}

impl SymEigen3 {
    pub fn new(a: &Matrix3<f64>) -> Self {
        let a = (a + a.transpose()) * 0.5;
        match closed_form(&a) {
            Some(e) if e.relative_residual(&a) <= RESIDUAL_TOLERANCE => e,
            _ => iterative(&a),
        }
    }

    pub fn min_value(&self) -> f64 {
        self.values[0]
    }

    pub fn max_value(&self) -> f64 {
        self.values[2]
    }

    pub fn min_vector(&self) -> Vector3<f64> {
        self.vectors.column(0).into_owned()
    }

    pub fn max_vector(&self) -> Vector3<f64> {
        self.vectors.column(2).into_owned()
    }

    fn relative_residual(&self, a: &Matrix3<f64>) -> f64 {
        let scale = a.amax().max(f64::MIN_POSITIVE);
        (0..3)
            .map(|k| {
                let v = self.vectors.column(k);
                (a * v - v * self.values[k]).amax()
            })
            .fold(0.0, f64::max)
            / scale
    }
}

fn closed_form(a: &Matrix3<f64>) -> Option<SymEigen3> {
    let scale = a.amax();
    if scale == 0.0 {
        return Some(SymEigen3 {
            values: Vector3::zeros(),
            vectors: Matrix3::identity(),
        });
    }
    let m = a / scale;
    let p1 = m[(0, 1)].powi(2) + m[(0, 2)].powi(2) + m[(1, 2)].powi(2);
    let q = m.trace() / 3.0;
    let p2 = (m[(0, 0)] - q).powi(2) + (m[(1, 1)] - q).powi(2) + (m[(2, 2)] - q).powi(2)
        + 2.0 * p1;
    let p = (p2 / 6.0).sqrt();
    if p < 1e-300 {
        return Some(SymEigen3 {
            values: Vector3::repeat(q * scale),
            vectors: Matrix3::identity(),
        });
    }
    let b = (m - Matrix3::identity() * q) / p;
    let r = (b.determinant() / 2.0).clamp(-1.0, 1.0);
    let phi = r.acos() / 3.0;
    let hi = q + 2.0 * p * phi.cos();
    let lo = q + 2.0 * p * (phi + 2.0 * PI / 3.0).cos();

    let v_lo = null_vector(&m, lo)?;
    let v_hi = null_vector(&m, hi)?;
    // Orthogonalize the largest against the smallest before completing the frame.
    let v_hi = (v_hi - v_lo * v_lo.dot(&v_hi)).try_normalize(1e-12)?;
    let v_mid = v_hi.cross(&v_lo);

    let vectors = Matrix3::from_columns(&[v_lo, v_mid, v_hi]);
    // Rayleigh quotients are more accurate than the trigonometric roots.
    let values = Vector3::new(
        v_lo.dot(&(a * v_lo)),
        v_mid.dot(&(a * v_mid)),
        v_hi.dot(&(a * v_hi)),
    );
    if !(values[0] <= values[1] && values[1] <= values[2]) {
        return None;
    }
    Some(SymEigen3 { values, vectors })
}

fn null_vector(m: &Matrix3<f64>, lambda: f64) -> Option<Vector3<f64>> {
    let s = m - Matrix3::identity() * lambda;
    let (r0, r1, r2) = (
        s.row(0).transpose(),
        s.row(1).transpose(),
        s.row(2).transpose(),
    );
    let candidates = [r0.cross(&r1), r0.cross(&r2), r1.cross(&r2)];
    let best = candidates
        .iter()
        .max_by(|a, b| a.norm_squared().total_cmp(&b.norm_squared()))?;
    best.try_normalize(1e-150)
}

fn iterative(a: &Matrix3<f64>) -> SymEigen3 {
    let e = a.symmetric_eigen();
    let mut order = [0usize, 1, 2];
    order.sort_by(|&i, &j| e.eigenvalues[i].total_cmp(&e.eigenvalues[j]));
    let values = Vector3::new(
        e.eigenvalues[order[0]],
        e.eigenvalues[order[1]],
        e.eigenvalues[order[2]],
    );
    let mut vectors = Matrix3::from_columns(&[
        e.eigenvectors.column(order[0]).into_owned(),
        e.eigenvectors.column(order[1]).into_owned(),
        e.eigenvectors.column(order[2]).into_owned(),
    ]);
    if vectors.determinant() < 0.0 {
        vectors.column_mut(1).neg_mut();
    }
    SymEigen3 { values, vectors }
}
