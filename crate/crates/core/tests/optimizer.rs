mod common;

use std::f64::consts::PI;

use nalgebra::{Matrix3, Unit, Vector3};
use pnec::energy::{gram_matrix, normal_covariance, pnec_energy, epipolar_normal};
use pnec::geometry::{cayley_to_rotation, spherical_to_unit, unit_to_spherical};
use pnec::metrics::{rotation_error, translation_error};
use pnec::optimizer::{
    fibonacci_lattice, joint_jacobian, joint_refinement, joint_residuals, nec_estimate,
    nec_translation, pnec_estimate, rotation_objective, rotation_objective_gradient,
    rotation_step, scf_e_matrix, scf_optimize, scf_optimize_from, scf_residual,
};
use pnec::{
    BearingPair, CayleyParams, Error, Regularization, RelativePose, Rotation3,
    SolverConfig, SphericalDirection, UnitVector3,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn angle_deg(a: &UnitVector3, b: &UnitVector3) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos().to_degrees()
}

fn axis_angle_deg(a: &UnitVector3, b: &UnitVector3) -> f64 {
    angle_deg(a, b).min(180.0 - angle_deg(a, b))
}

fn perturbed(rng: &mut impl Rng, r: &Rotation3, degrees: f64) -> Rotation3 {
    r * Rotation3::from_axis_angle(&common::random_unit(rng), degrees.to_radians())
}

/// Realistic instance: 10 points, 1 px-like bearing noise, random pose.
fn instance(rng: &mut impl Rng) -> (Vec<BearingPair>, Rotation3, UnitVector3) {
    let r = common::random_rotation(rng, 0.5);
    let t = common::random_unit(rng);
    let norm = rng.random_range(0.5..2.0);
    let set = common::noisy_pairs(rng, 10, &r, &(t.into_inner() * norm), 2.0 / 800.0);
    (set, r, t)
}

#[test]
fn fibonacci_lattice_examples() {
    let two = fibonacci_lattice(2).unwrap();
    assert!((two[0].into_inner() - Vector3::y()).amax() < 1e-15);
    assert!((two[1].into_inner() + Vector3::y()).amax() < 1e-15);
    let three = fibonacci_lattice(3).unwrap();
    let phi = PI * (3.0 - 5f64.sqrt());
    assert!((three[1].into_inner() - Vector3::new(phi.cos(), 0.0, phi.sin())).amax() < 1e-15);
    let k500 = fibonacci_lattice(500).unwrap();
    assert_eq!(k500.len(), 500);
    let mut min_sep = f64::MAX;
    for (i, a) in k500.iter().enumerate() {
        assert!((a.norm() - 1.0).abs() < 1e-12);
        for b in &k500[i + 1..] {
            min_sep = min_sep.min(angle_deg(a, b));
        }
    }
    assert!(min_sep > 4.0, "min separation {min_sep}");
    assert!(matches!(fibonacci_lattice(1), Err(Error::InvalidArgument(_))));
}

#[test]
fn nec_translation_matches_dense_lattice() {
    let lattice = fibonacci_lattice(100_000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for _ in 0..100 {
        let (set, r, _) = instance(&mut rng);
        let m = gram_matrix(&set, &r);
        let (t, lambda) = nec_translation(&set, &r);
        let brute = lattice.iter().map(|v| v.dot(&(m * v.into_inner()))).fold(f64::MAX, f64::min);
        // The lattice can only approach the minimum to within its covering radius
        // (below 0.01 rad for 10⁵ points) along the stiffest direction.
        let spread = m.symmetric_eigenvalues().amax() - lambda;
        assert!(lambda <= brute + 1e-12);
        assert!(brute - lambda <= spread * 1e-4, "{lambda} vs {brute}");
        assert!((t.dot(&(m * t.into_inner())) - lambda).abs() <= 1e-12 * m.trace());
        for _ in 0..100 {
            let v = common::random_unit(&mut rng);
            assert!(lambda <= v.dot(&(m * v.into_inner())) + 1e-9);
        }
    }
}

#[test]
fn nec_translation_matches_dense_lattice_on_pure_rotation() {
    let lattice = fibonacci_lattice(100_000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(49);
    for _ in 0..100 {
        let r = common::random_rotation(&mut rng, 0.5);
        let set = common::noisy_pairs(&mut rng, 10, &r, &Vector3::zeros(), 2.0 / 800.0);
        let m = gram_matrix(&set, &r);
        let (_, lambda) = nec_translation(&set, &r);
        let brute = lattice.iter().map(|v| v.dot(&(m * v.into_inner()))).fold(f64::MAX, f64::min);
        assert!((brute - lambda).abs() <= 1e-6, "{lambda} vs {brute}");
    }
}

#[test]
fn nec_translation_noise_free_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    for _ in 0..50 {
        let r = common::random_rotation(&mut rng, 0.5);
        let t = common::random_unit(&mut rng);
        let set = common::noise_free_pairs(&mut rng, 10, &r, &(t.into_inner() * 1.5), 0.0);
        let (est, lambda) = nec_translation(&set, &r);
        assert!(lambda <= 1e-18, "{lambda}");
        assert!(axis_angle_deg(&est, &t) < 1e-6);
    }
}

#[test]
fn e_matrix_reductions() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    for _ in 0..50 {
        let (set, r, _) = instance(&mut rng);
        let t = common::random_unit(&mut rng);
        let zeroed: Vec<BearingPair> =
            set.iter().map(|p| BearingPair { cov_target: Matrix3::zeros(), ..*p }).collect();
        let e = scf_e_matrix(&zeroed, &r, &t, 1.0).unwrap();
        let mut expected = Matrix3::zeros();
        for p in &zeroed {
            let n = epipolar_normal(p, &r);
            let a = n * n.transpose();
            expected += a - Matrix3::identity() * t.dot(&(a * t.into_inner()));
        }
        assert!((e - expected).amax() <= 1e-12 * expected.amax().max(1.0));

        let single = &set[..1];
        let e = scf_e_matrix(single, &r, &t, 1e-10).unwrap();
        assert!((e - e.transpose()).amax() <= 1e-10 * e.amax());
        let n = epipolar_normal(&single[0], &r);
        let a = n * n.transpose();
        let b = normal_covariance(&single[0], &r) + Matrix3::identity() * 1e-10;
        let (ta, tb) = (t.dot(&(a * t.into_inner())), t.dot(&(b * t.into_inner())));
        let et = (a * t.into_inner() * tb - b * t.into_inner() * ta) / (tb * tb);
        assert!((e * t.into_inner() - et).amax() <= 1e-9 * et.amax().max(1e-300));
        assert!(t.dot(&(e * t.into_inner())).abs() <= 1e-9 * e.amax());
    }
}

#[test]
fn scf_converges_to_a_fixed_point_below_every_lattice_sample() {
    let config = SolverConfig::default();
    let lattice = fibonacci_lattice(config.lattice_points).unwrap();
    let reg = config.reg();
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    for _ in 0..100 {
        let (set, r, _) = instance(&mut rng);
        let r = perturbed(&mut rng, &r, 0.5);
        let t = scf_optimize(&set, &r, &config).unwrap();
        assert!((t.norm() - 1.0).abs() < 1e-12);
        let res = scf_residual(&set, &r, &t, config.regularization).unwrap();
        assert!(res <= 1e-8, "residual {res}");
        let e = pnec_energy(&set, &r, &t, reg).unwrap();
        for v in &lattice {
            assert!(e <= pnec_energy(&set, &r, v, reg).unwrap() + 1e-12);
        }
        let out = scf_optimize_from(&set, &r, &config, &lattice, None).unwrap();
        assert!(out.energy <= out.start_energy + 1e-12);
    }
}

#[test]
fn scf_reduces_to_nec_without_covariance() {
    let config = SolverConfig { regularization: 1.0, ..SolverConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(54);
    for _ in 0..100 {
        let (set, r, _) = instance(&mut rng);
        let set: Vec<BearingPair> =
            set.into_iter().map(|p| BearingPair { cov_target: Matrix3::zeros(), ..p }).collect();
        let t = scf_optimize(&set, &r, &config).unwrap();
        let (nec, _) = nec_translation(&set, &r);
        assert!(axis_angle_deg(&t, &nec) <= 0.01);
    }
}

#[test]
fn scf_recovers_noise_free_translation() {
    let config = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    for _ in 0..50 {
        let r = common::random_rotation(&mut rng, 0.5);
        let t = common::random_unit(&mut rng);
        let mut set = common::noise_free_pairs(&mut rng, 10, &r, &(t.into_inner() * 1.5), 0.0);
        for p in &mut set {
            p.cov_target = Matrix3::identity() * 1e-8;
        }
        let est = scf_optimize(&set, &r, &config).unwrap();
        assert!(axis_angle_deg(&est, &t) <= 0.1);
    }
}

#[test]
fn rotation_step_recovers_noise_free_rotation() {
    let config = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(56);
    for _ in 0..50 {
        let r = common::random_rotation(&mut rng, 0.5);
        let t = common::random_unit(&mut rng).into_inner() * 1.5;
        let set = common::noise_free_pairs(&mut rng, 10, &r, &t, 0.0);
        let init = perturbed(&mut rng, &r, 1.0);
        let out = rotation_step(&set, &[1.0; 10], &init, &config).unwrap();
        assert!(rotation_error(&r, &out.rotation) <= 0.01);
        assert!(out.objective <= out.initial_objective + 1e-15);
        assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
    }
}

#[test]
fn rotation_step_never_increases_the_objective() {
    let config = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(57);
    for _ in 0..100 {
        let (set, r, _) = instance(&mut rng);
        let weights: Vec<f64> = (0..set.len()).map(|_| rng.random_range(0.1..2.0)).collect();
        let init = perturbed(&mut rng, &r, 5.0);
        let out = rotation_step(&set, &weights, &init, &config).unwrap();
        assert!(out.objective <= out.initial_objective + 1e-15);
        let direct = rotation_objective(&set, &weights, &out.rotation).unwrap();
        assert!((direct - out.objective).abs() <= 1e-12 * out.initial_objective);
    }
}

#[test]
fn rotation_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(58);
    let h = 1e-6;
    let mut checked = 0;
    while checked < 100 {
        let (set, r, _) = instance(&mut rng);
        let weights: Vec<f64> = (0..set.len()).map(|_| rng.random_range(0.5..2.0)).collect();
        let r0 = perturbed(&mut rng, &r, 10.0);
        let u = Vector3::new(rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05));
        let m = pnec::energy::weighted_gram(&set, &(r0 * cayley_to_rotation(&CayleyParams(u))), &weights).unwrap();
        let eig = m.symmetric_eigenvalues();
        let mut sorted: Vec<f64> = eig.iter().copied().collect();
        sorted.sort_by(f64::total_cmp);
        if sorted[1] - sorted[0] < 1e-3 * sorted[2] {
            continue;
        }
        let (_, g) = rotation_objective_gradient(&set, &weights, &r0, &u).unwrap();
        let fd = Vector3::from_fn(|k, _| {
            let e = Vector3::ith(k, h);
            let f = |v: Vector3<f64>| {
                rotation_objective(&set, &weights, &(r0 * cayley_to_rotation(&CayleyParams(v)))).unwrap()
            };
            (f(u + e) - f(u - e)) / (2.0 * h)
        });
        assert!((g - fd).norm() <= 1e-4 * g.norm(), "{g} vs {fd}");
        checked += 1;
    }
}

#[test]
fn joint_jacobian_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(59);
    let h = 1e-6;
    let c = 1e-10;
    for _ in 0..100 {
        let (set, r, t) = instance(&mut rng);
        let r = perturbed(&mut rng, &r, 2.0);
        let t = Unit::new_normalize(t.into_inner() + common::random_unit(&mut rng).into_inner() * 0.05);
        let dir = unit_to_spherical(&t);
        let jac = joint_jacobian(&set, &r, &dir, c).unwrap();
        let res = |r: &Rotation3, d: &SphericalDirection| joint_residuals(&set, r, &spherical_to_unit(d), c).unwrap();
        let mut err: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for k in 0..5 {
            let (plus, minus) = if k < 3 {
                let e = Vector3::ith(k, h);
                (
                    res(&(r * cayley_to_rotation(&CayleyParams(e))), &dir),
                    res(&(r * cayley_to_rotation(&CayleyParams(-e))), &dir),
                )
            } else {
                let shift = |s: f64| {
                    let mut d = dir;
                    if k == 3 { d.theta += s } else { d.phi += s }
                    d
                };
                (res(&r, &shift(h)), res(&r, &shift(-h)))
            };
            for (i, row) in jac.iter().enumerate() {
                let fd = (plus[i] - minus[i]) / (2.0 * h);
                err = err.max((row[k] - fd).abs());
                scale = scale.max(row[k].abs());
            }
        }
        assert!(err <= 1e-4 * scale, "error {err} scale {scale}");
    }
}

#[test]
fn joint_refinement_is_a_fixed_point_at_noise_free_truth() {
    let config = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(60);
    for _ in 0..20 {
        let r = common::random_rotation(&mut rng, 0.5);
        let t = common::random_unit(&mut rng);
        let set = common::noise_free_pairs(&mut rng, 10, &r, &(t.into_inner() * 1.5), 2.0 / 800.0);
        let out = joint_refinement(&set, &config, &RelativePose { rotation: r, translation: t }).unwrap();
        assert_eq!(out.accepted, 0);
        assert_eq!(out.pose, RelativePose { rotation: r, translation: t });
    }
}

#[test]
fn joint_refinement_is_monotone() {
    let config = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(61);
    for _ in 0..50 {
        let (set, r, t) = instance(&mut rng);
        let init = RelativePose { rotation: perturbed(&mut rng, &r, 2.0), translation: t };
        let out = joint_refinement(&set, &config, &init).unwrap();
        assert!(out.energy <= out.initial_energy);
        let mut prev = out.initial_energy;
        for e in &out.trace {
            assert!(*e < prev);
            prev = *e;
        }
        let zero_c = SolverConfig { regularization: 0.0, ..config.clone() };
        assert!(joint_refinement(&set, &zero_c, &init).is_err());
    }
}

#[test]
fn estimators_recover_noise_free_poses() {
    let config = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(62);
    for _ in 0..20 {
        let r = common::random_rotation(&mut rng, 0.5);
        let t = common::random_unit(&mut rng);
        let set = common::noise_free_pairs(&mut rng, 10, &r, &(t.into_inner() * 1.5), 2.0 / 800.0);
        let init = perturbed(&mut rng, &r, 1.0);
        let nec = nec_estimate(&set, &config, &init).unwrap();
        assert!(rotation_error(&r, &nec.pose.rotation) <= 1e-6);
        assert!(translation_error(&t, &nec.pose.translation) <= 1e-4);
        let pnec = pnec_estimate(&set, &config, &init, &Vector3::z_axis()).unwrap();
        assert!(rotation_error(&r, &pnec.pose.rotation) <= 1e-6);
        assert!(translation_error(&t, &pnec.pose.translation) <= 1e-4);
    }
}

#[test]
fn pnec_without_covariance_reproduces_nec() {
    let mut rng = ChaCha8Rng::seed_from_u64(63);
    let unit_c = SolverConfig { regularization: 1.0, ..SolverConfig::default() };
    let plain = SolverConfig { reweight: false, joint_refinement: false, ..SolverConfig::default() };
    for _ in 0..50 {
        let (set, r, _) = instance(&mut rng);
        let init = perturbed(&mut rng, &r, 1.0);
        let zeroed: Vec<BearingPair> =
            set.iter().map(|p| BearingPair { cov_target: Matrix3::zeros(), ..*p }).collect();
        let nec = nec_estimate(&zeroed, &unit_c, &init).unwrap();
        let pnec = pnec_estimate(&zeroed, &unit_c, &init, &Vector3::z_axis()).unwrap();
        assert!(rotation_error(&nec.pose.rotation, &pnec.pose.rotation) <= 0.01);

        let nec = nec_estimate(&set, &plain, &init).unwrap();
        let pnec = pnec_estimate(&set, &plain, &init, &Vector3::z_axis()).unwrap();
        assert!(rotation_error(&nec.pose.rotation, &pnec.pose.rotation) <= 0.01);
    }
}

#[test]
fn final_energy_never_exceeds_stage_one() {
    let config = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(64);
    for _ in 0..50 {
        let (set, r, _) = instance(&mut rng);
        let report = pnec_estimate(&set, &config, &perturbed(&mut rng, &r, 1.0), &Vector3::z_axis()).unwrap();
        assert!(report.final_energy <= report.stage1_energy + 1e-12);
        assert_eq!(report.rounds.len(), config.outer_iterations);
        assert!(report.lm_trace.windows(2).all(|w| w[1] < w[0]));
    }
}

#[test]
fn flipping_both_bearings_flips_the_translation() {
    let config = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(65);
    for _ in 0..20 {
        let (set, r, _) = instance(&mut rng);
        let init = perturbed(&mut rng, &r, 1.0);
        let flipped: Vec<BearingPair> = set
            .iter()
            .map(|p| BearingPair { f_host: -p.f_host, f_target: -p.f_target, ..*p })
            .collect();
        let a = nec_estimate(&set, &config, &init).unwrap();
        let b = nec_estimate(&flipped, &config, &init).unwrap();
        assert!(rotation_error(&a.pose.rotation, &b.pose.rotation) < 1e-9);
        assert!(angle_deg(&a.pose.translation, &b.pose.translation) > 179.999);
    }
}

#[test]
fn estimates_are_deterministic() {
    let config = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(66);
    let (set, r, _) = instance(&mut rng);
    let init = perturbed(&mut rng, &r, 1.0);
    let strip = |mut rep: pnec::EstimateReport| {
        rep.wall_time = 0.0;
        rep
    };
    let a = strip(pnec_estimate(&set, &config, &init, &Vector3::z_axis()).unwrap());
    let b = strip(pnec_estimate(&set, &config, &init, &Vector3::z_axis()).unwrap());
    assert_eq!(a, b);
    let handle = {
        let set = set.clone();
        let config = config.clone();
        std::thread::spawn(move || strip(pnec_estimate(&set, &config, &init, &Vector3::z_axis()).unwrap()))
    };
    assert_eq!(handle.join().unwrap(), a);
}

#[test]
fn degenerate_inputs_are_rejected() {
    let config = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(67);
    let (set, r, _) = instance(&mut rng);
    assert!(matches!(
        pnec_estimate(&set[..4], &config, &r, &Vector3::z_axis()),
        Err(Error::TooFewCorrespondences { needed: 5, got: 4 })
    ));
    let parallel: Vec<BearingPair> = set.iter().map(|p| BearingPair { f_host: set[0].f_host, ..*p }).collect();
    assert!(matches!(
        nec_estimate(&parallel, &config, &r),
        Err(Error::DegenerateConfiguration(_))
    ));
    let bad = SolverConfig { lattice_points: 1, ..config };
    assert!(pnec_estimate(&set, &bad, &r, &Vector3::z_axis()).is_err());
    assert!(rotation_step(&set, &[0.0; 10], &r, &SolverConfig::default()).is_err());
}

#[test]
fn regularization_dominance_reduces_to_nec() {
    let mut rng = ChaCha8Rng::seed_from_u64(68);
    let big = Regularization::new(1e12).unwrap();
    for _ in 0..100 {
        let (set, r, _) = instance(&mut rng);
        let t = common::random_unit(&mut rng);
        let nec = pnec::energy::nec_energy(&set, &r, &t);
        let p = pnec_energy(&set, &r, &t, big).unwrap();
        assert!((1e12 * p - nec).abs() / nec <= 1e-6);
    }
}
