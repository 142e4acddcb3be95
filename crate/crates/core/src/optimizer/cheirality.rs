//! Translation sign from triangulated depths.

use nalgebra::Unit;

use crate::energy::BearingPair;
use crate::geometry::{Rotation3, UnitVector3};

/// Depths `(λ, μ)` solving `λ f − μ R f' = t` in the least-squares sense, or `None`
/// for rays that are numerically parallel.
pub fn triangulate_depths(pair: &BearingPair, r: &Rotation3, t: &UnitVector3) -> Option<(f64, f64)> {
    let f = pair.f_host.into_inner();
    let g = r * pair.f_target.into_inner();
    let c = f.dot(&g);
    let det = 1.0 - c * c;
    if det < 1e-12 {
        return None;
    }
    let (b1, b2) = (f.dot(t), -g.dot(t));
    let lambda = (b1 + c * b2) / det;
    let mu = (c * b1 + b2) / det;
    Some((lambda, mu))
}

/// Return `t` or `-t`, whichever gives a non-negative median triangulated host depth.
pub fn resolve_translation_sign(
    set: &[BearingPair],
    r: &Rotation3,
    t: &UnitVector3,
) -> UnitVector3 {
    let mut host: Vec<f64> = set
        .iter()
        .filter_map(|p| triangulate_depths(p, r, t))
        .map(|(l, _)| l)
        .collect();
    host.sort_by(f64::total_cmp);
    let median = match host.len() {
        0 => 0.0,
        n if n % 2 == 1 => host[n / 2],
        n => 0.5 * (host[n / 2 - 1] + host[n / 2]),
    };
    if median >= 0.0 {
        *t
    } else {
        Unit::new_unchecked(-t.into_inner())
    }
}
