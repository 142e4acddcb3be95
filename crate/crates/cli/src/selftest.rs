//! Built-in numerical checks: eigen oracle, SCF fixed point, directional limit and
//! derivative checks, on deterministic synthetic instances.

use nalgebra::{Unit, Vector3};
use pnec::energy::{directional_limit, epipolar_normal, gram_matrix, residual_variance};
use pnec::geometry::{cayley_to_rotation, spherical_to_unit, unit_to_spherical};
use pnec::optimizer::{
    fibonacci_lattice, joint_jacobian, joint_residuals, nec_translation, rotation_objective,
    rotation_objective_gradient, scf_optimize, scf_residual,
};
use pnec::simulation::{
    generate_instance, CameraKind, ExperimentParams, NoiseSpec, ProblemInstance, SceneConfig,
};
use pnec::{CayleyParams, Regularization, Rotation3, SolverConfig, SphericalDirection};

const INSTANCES: u64 = 20;
const FD_STEP: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn instances(solver: &SolverConfig) -> pnec::Result<Vec<ProblemInstance>> {
    let exp = ExperimentParams { beta: 0.75 };
    (0..INSTANCES)
        .map(|seed| {
            let camera = if seed % 2 == 0 { CameraKind::Omni } else { CameraKind::Pinhole };
            generate_instance(&SceneConfig::default(), &NoiseSpec::default(), camera, &exp, solver.kappa, seed)
        })
        .collect()
}

/// A fixed small rotation away from the truth, so derivatives are not taken at a
/// stationary point.
fn offset(r: &Rotation3) -> Rotation3 {
    r * Rotation3::new(Vector3::new(0.01, -0.02, 0.015))
}

fn eigen_oracle(data: &[ProblemInstance]) -> pnec::Result<SuiteResult> {
    let lattice = fibonacci_lattice(10_000)?;
    let mut worst: f64 = 0.0;
    let mut passed = true;
    for inst in data {
        let r = offset(&inst.truth.rotation);
        let m = gram_matrix(&inst.pairs, &r);
        let (t, lambda) = nec_translation(&inst.pairs, &r);
        let brute = lattice.iter().map(|v| v.dot(&(m * v.into_inner()))).fold(f64::MAX, f64::min);
        let spread = m.symmetric_eigenvalues().amax();
        // 10⁴ lattice points cover the sphere to within about 0.03 rad.
        passed &= lambda <= brute + 1e-12 && brute - lambda <= spread * 1e-3;
        passed &= (t.dot(&(m * t.into_inner())) - lambda).abs() <= 1e-12 * m.trace();
        worst = worst.max(brute - lambda);
    }
    Ok(SuiteResult { name: "eigen-oracle", passed, detail: format!("max lattice gap {worst:.3e}") })
}

fn scf_fixed_point(data: &[ProblemInstance], solver: &SolverConfig) -> pnec::Result<SuiteResult> {
    let mut worst: f64 = 0.0;
    for inst in data {
        let r = offset(&inst.truth.rotation);
        let t = scf_optimize(&inst.pairs, &r, solver)?;
        worst = worst.max(scf_residual(&inst.pairs, &r, &t, solver.regularization)?);
    }
    Ok(SuiteResult {
        name: "scf-fixed-point",
        passed: worst <= 1e-8,
        detail: format!("max residual {worst:.3e}"),
    })
}

fn limit_check(data: &[ProblemInstance]) -> pnec::Result<SuiteResult> {
    let zero = Regularization::new(0.0)?;
    let theta: f64 = 1e-4;
    let mut worst: f64 = 0.0;
    for inst in data {
        let r = inst.truth.rotation;
        for p in inst.pairs.iter() {
            let f = p.f_host.into_inner();
            let k = Unit::new_normalize(f.cross(&Vector3::new(0.3, -0.5, 0.8)));
            let t = Unit::new_normalize(f * theta.cos() + f.cross(&k) * theta.sin());
            let value = t.dot(&epipolar_normal(p, &r)).powi(2) / residual_variance(p, &r, &t, zero);
            let limit = directional_limit(&k, p, &r)?;
            worst = worst.max((value - limit).abs() / limit);
        }
    }
    Ok(SuiteResult { name: "limit-check", passed: worst <= 1e-4, detail: format!("max rel. error {worst:.3e}") })
}

fn relative(err: f64, scale: f64) -> f64 {
    if scale > 0.0 {
        err / scale
    } else {
        err
    }
}

fn gradient_check(data: &[ProblemInstance], solver: &SolverConfig) -> pnec::Result<SuiteResult> {
    let h = FD_STEP;
    let mut worst_rot: f64 = 0.0;
    let mut worst_joint: f64 = 0.0;
    for inst in data {
        let set = inst.pairs.pairs();
        let r0 = offset(&inst.truth.rotation);
        let weights = vec![1.0; set.len()];
        let u = Vector3::zeros();
        let (_, g) = rotation_objective_gradient(set, &weights, &r0, &u)?;
        let f = |v: Vector3<f64>| rotation_objective(set, &weights, &(r0 * cayley_to_rotation(&CayleyParams(v))));
        let mut fd = Vector3::zeros();
        for k in 0..3 {
            let e = Vector3::ith(k, h);
            fd[k] = (f(u + e)? - f(u - e)?) / (2.0 * h);
        }
        worst_rot = worst_rot.max(relative((g - fd).norm(), g.norm()));

        let dir = unit_to_spherical(&inst.truth.translation);
        let c = solver.regularization;
        let jac = joint_jacobian(set, &r0, &dir, c)?;
        let res = |r: &Rotation3, d: &SphericalDirection| joint_residuals(set, r, &spherical_to_unit(d), c);
        let (mut err, mut scale): (f64, f64) = (0.0, 0.0);
        for k in 0..5 {
            let (plus, minus) = if k < 3 {
                let e = Vector3::ith(k, h);
                (
                    res(&(r0 * cayley_to_rotation(&CayleyParams(e))), &dir)?,
                    res(&(r0 * cayley_to_rotation(&CayleyParams(-e))), &dir)?,
                )
            } else {
                let shift = |s: f64| {
                    let mut d = dir;
                    if k == 3 {
                        d.theta += s;
                    } else {
                        d.phi += s;
                    }
                    d
                };
                (res(&r0, &shift(h))?, res(&r0, &shift(-h))?)
            };
            for (i, row) in jac.iter().enumerate() {
                err = err.max((row[k] - (plus[i] - minus[i]) / (2.0 * h)).abs());
                scale = scale.max(row[k].abs());
            }
        }
        worst_joint = worst_joint.max(relative(err, scale));
    }
    Ok(SuiteResult {
        name: "gradient-check",
        passed: worst_rot <= 1e-4 && worst_joint <= 1e-4,
        detail: format!("rotation {worst_rot:.3e}, joint Jacobian {worst_joint:.3e}"),
    })
}

pub fn run_selftest(solver: &SolverConfig) -> pnec::Result<Vec<SuiteResult>> {
    let data = instances(solver)?;
    Ok(vec![
        eigen_oracle(&data)?,
        scf_fixed_point(&data, solver)?,
        limit_check(&data)?,
        gradient_check(&data, solver)?,
    ])
}
