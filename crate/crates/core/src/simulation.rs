//! Seeded synthetic two-view problems and Monte Carlo experiment runner.
//!
//! Points are sampled in the host frame and mapped to the target frame with
//! `x' = Rᵀ(x − t)`. Only target bearings are perturbed; the image-plane noise
//! standard deviation is doubled to compensate for the noise-free host frame.
//! Every trial draws from its own `ChaCha8Rng` seeded by
//! [`trial_seed`]`(master, cell, trial)`, so results do not depend on scheduling.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Rotation2, Unit, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{pnec_energy, BearingPair, CorrespondenceSet};
use crate::error::{Error, Result};
use crate::geometry::{Rotation3, UnitVector3};
use crate::metrics::{rotation_error, translation_error};
use crate::optimizer::{nec_estimate, pnec_estimate, RelativePose, SolverConfig};
use crate::uncertainty::{
    omni_alignment_rotation, psd_cholesky, unscented_omni, unscented_pinhole, CameraIntrinsics,
    Cov2D,
};

const MAX_RESAMPLES: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseType {
    IsoHomo,
    IsoInhomo,
    AnisoHomo,
    AnisoInhomo,
}

impl NoiseType {
    pub const ALL: [NoiseType; 4] = [
        NoiseType::IsoHomo,
        NoiseType::IsoInhomo,
        NoiseType::AnisoHomo,
        NoiseType::AnisoInhomo,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            NoiseType::IsoHomo => "iso-homo",
            NoiseType::IsoInhomo => "iso-inhomo",
            NoiseType::AnisoHomo => "aniso-homo",
            NoiseType::AnisoInhomo => "aniso-inhomo",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSpec {
    pub noise_type: NoiseType,
    /// Pixels.
    pub level: f64,
    pub s_range: [f64; 2],
    pub beta_range: [f64; 2],
    pub alpha_range: [f64; 2],
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            noise_type: NoiseType::AnisoInhomo,
            level: 1.0,
            s_range: [0.5, 1.5],
            beta_range: [0.5, 1.0],
            alpha_range: [0.0, PI],
        }
    }
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.level.is_finite() && self.level > 0.0) {
            return Err(Error::InvalidArgument(format!("noise level must be > 0, got {}", self.level)));
        }
        let ordered = |r: [f64; 2]| r[0].is_finite() && r[1].is_finite() && r[0] <= r[1];
        if !ordered(self.s_range) || self.s_range[0] <= 0.0 {
            return Err(Error::InvalidArgument(format!("invalid s range {:?}", self.s_range)));
        }
        if !ordered(self.beta_range) || self.beta_range[0] < 0.0 || self.beta_range[1] > 1.0 {
            return Err(Error::InvalidArgument(format!("invalid beta range {:?}", self.beta_range)));
        }
        if !ordered(self.alpha_range) {
            return Err(Error::InvalidArgument(format!("invalid alpha range {:?}", self.alpha_range)));
        }
        Ok(())
    }
}

/// Generating parameters of `Σ₂D = s R_α diag(β, 1−β) R_αᵀ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovParams {
    pub s: f64,
    pub beta: f64,
    pub alpha: f64,
}

impl CovParams {
    pub fn matrix(&self) -> Cov2D {
        let r = Rotation2::new(self.alpha).into_inner();
        let m = r * Matrix2::new(self.beta, 0.0, 0.0, 1.0 - self.beta) * r.transpose() * self.s;
        (m + m.transpose()) * 0.5
    }
}

/// Quantities drawn once per experiment cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    /// Anisotropy shared by all covariances under [`NoiseType::AnisoHomo`].
    pub beta: f64,
}

impl ExperimentParams {
    pub fn sample(spec: &NoiseSpec, rng: &mut impl Rng) -> Self {
        Self { beta: uniform(rng, spec.beta_range) }
    }
}

fn uniform(rng: &mut impl Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.random_range(range[0]..range[1])
    }
}

pub fn sample_cov_params(spec: &NoiseSpec, rng: &mut impl Rng, exp: &ExperimentParams) -> CovParams {
    match spec.noise_type {
        NoiseType::IsoHomo => CovParams { s: 1.0, beta: 0.5, alpha: 0.0 },
        NoiseType::IsoInhomo => CovParams { s: uniform(rng, spec.s_range), beta: 0.5, alpha: 0.0 },
        NoiseType::AnisoHomo => CovParams { s: 1.0, beta: exp.beta, alpha: uniform(rng, spec.alpha_range) },
        NoiseType::AnisoInhomo => CovParams {
            s: uniform(rng, spec.s_range),
            beta: uniform(rng, spec.beta_range),
            alpha: uniform(rng, spec.alpha_range),
        },
    }
}

pub fn sample_covariance(spec: &NoiseSpec, rng: &mut impl Rng, exp: &ExperimentParams) -> Cov2D {
    sample_cov_params(spec, rng, exp).matrix()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CameraKind {
    Omni,
    Pinhole,
}

impl CameraKind {
    pub fn name(&self) -> &'static str {
        match self {
            CameraKind::Omni => "omni",
            CameraKind::Pinhole => "pinhole",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub n_points: usize,
    pub translation_enabled: bool,
    /// Host-frame depth (pinhole `z`, omnidirectional range), meters.
    pub depth_range: [f64; 2],
    /// Host-frame `x` and `y` range of pinhole points, meters.
    pub lateral_range: [f64; 2],
    /// Radians.
    pub max_rotation: f64,
    /// Meters.
    pub max_translation: f64,
    pub focal_px: f64,
    /// Pinhole image width and height; the principal point is the image center.
    pub image_size: [f64; 2],
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_points: 10,
            translation_enabled: true,
            depth_range: [4.0, 8.0],
            lateral_range: [-2.0, 2.0],
            max_rotation: 0.5,
            max_translation: 2.0,
            focal_px: 800.0,
            image_size: [752.0, 480.0],
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::InvalidArgument(m));
        if self.n_points < crate::energy::MIN_CORRESPONDENCES {
            return fail(format!("n_points must be >= 5, got {}", self.n_points));
        }
        if !(self.depth_range[0] > 0.0 && self.depth_range[0] <= self.depth_range[1]) {
            return fail(format!("invalid depth range {:?}", self.depth_range));
        }
        if !(self.lateral_range[0] < self.lateral_range[1]) {
            return fail(format!("invalid lateral range {:?}", self.lateral_range));
        }
        if !(self.max_rotation >= 0.0 && self.max_rotation < PI) {
            return fail(format!("max_rotation must be in [0, pi), got {}", self.max_rotation));
        }
        if !(self.max_translation >= 0.0 && self.max_translation.is_finite()) {
            return fail(format!("invalid max_translation {}", self.max_translation));
        }
        if !(self.focal_px > 0.0 && self.image_size.iter().all(|v| *v > 0.0)) {
            return fail("focal length and image size must be positive".into());
        }
        Ok(())
    }

    pub fn intrinsics(&self) -> CameraIntrinsics {
        CameraIntrinsics::pinhole(
            self.focal_px,
            self.focal_px,
            self.image_size[0] / 2.0,
            self.image_size[1] / 2.0,
        )
        .expect("validated focal length")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemInstance {
    pub pairs: CorrespondenceSet,
    /// Ground truth; without translation the direction is a placeholder.
    pub truth: RelativePose,
    pub translation_norm: f64,
    pub true_covs_2d: Vec<Cov2D>,
    pub cov_params: Vec<CovParams>,
    /// Parameters the attached covariances were built from; differs from
    /// `cov_params` only after [`offset_covariances`].
    pub attached_params: Vec<CovParams>,
    pub camera: CameraKind,
    pub scene: SceneConfig,
    pub noise: NoiseSpec,
    pub seed: u64,
}

fn random_unit(rng: &mut impl Rng) -> UnitVector3 {
    loop {
        let v = Vector3::new(
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
            rng.sample::<f64, _>(StandardNormal),
        );
        if let Some(u) = Unit::try_new(v, 1e-12) {
            return u;
        }
    }
}

fn gaussian2(rng: &mut impl Rng, cov: &Cov2D) -> Result<Vector2<f64>> {
    let l = psd_cholesky(cov)?;
    let z = Vector2::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal));
    Ok(l * z)
}

/// Noise-free host point and its target-frame coordinates.
fn sample_point(
    rng: &mut impl Rng,
    scene: &SceneConfig,
    camera: CameraKind,
    r: &Rotation3,
    t: &Vector3<f64>,
) -> Result<(Vector3<f64>, Vector3<f64>)> {
    for _ in 0..MAX_RESAMPLES {
        let x = match camera {
            CameraKind::Omni => random_unit(rng).into_inner() * uniform(rng, scene.depth_range),
            CameraKind::Pinhole => Vector3::new(
                uniform(rng, scene.lateral_range),
                uniform(rng, scene.lateral_range),
                uniform(rng, scene.depth_range),
            ),
        };
        let xp = r.transpose() * (x - t);
        let valid = match camera {
            CameraKind::Omni => xp.norm() > 1e-6,
            CameraKind::Pinhole => xp.z > 1e-6,
        };
        if valid {
            return Ok((x, xp));
        }
    }
    Err(Error::GenerationFailed(MAX_RESAMPLES))
}

/// Deterministic instance for `seed`; `exp` carries cell-level draws.
pub fn generate_instance(
    scene: &SceneConfig,
    spec: &NoiseSpec,
    camera: CameraKind,
    exp: &ExperimentParams,
    kappa: f64,
    seed: u64,
) -> Result<ProblemInstance> {
    scene.validate()?;
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis = random_unit(&mut rng);
    let angle = uniform(&mut rng, [0.0, scene.max_rotation]);
    let r = Rotation3::from_axis_angle(&axis, angle);
    let t_dir = random_unit(&mut rng);
    let t_norm = if scene.translation_enabled {
        uniform(&mut rng, [0.0, scene.max_translation])
    } else {
        0.0
    };
    let t = t_dir.into_inner() * t_norm;

    let k = scene.intrinsics();
    let std_scale = 2.0 * spec.level;
    let mut pairs = Vec::with_capacity(scene.n_points);
    let mut covs = Vec::with_capacity(scene.n_points);
    let mut params = Vec::with_capacity(scene.n_points);
    for _ in 0..scene.n_points {
        let (x, xp) = sample_point(&mut rng, scene, camera, &r, &t)?;
        let p = sample_cov_params(spec, &mut rng, exp);
        let cov2 = p.matrix();
        let noise_cov = cov2 * std_scale.powi(2);
        let eta = gaussian2(&mut rng, &noise_cov)?;
        let f_host = Unit::new_normalize(x);
        let (f_target, cov3) = match camera {
            CameraKind::Pinhole => {
                let px = k.project(&xp).ok_or(Error::GenerationFailed(MAX_RESAMPLES))?;
                unscented_pinhole(&(px + eta), &noise_cov, &k, kappa)?
            }
            CameraKind::Omni => {
                let exact = Unit::new_normalize(xp);
                let noisy = perturb_tangent(&exact, &(eta / scene.focal_px))?;
                let cov3 = unscented_omni(&noisy, &(noise_cov / scene.focal_px.powi(2)), kappa)?;
                (noisy, cov3)
            }
        };
        pairs.push(BearingPair::new(f_host, f_target, cov3)?);
        covs.push(cov2);
        params.push(p);
    }
    Ok(ProblemInstance {
        pairs: CorrespondenceSet::new(pairs)?,
        truth: RelativePose { rotation: r, translation: t_dir },
        translation_norm: t_norm,
        true_covs_2d: covs,
        attached_params: params.clone(),
        cov_params: params,
        camera,
        scene: *scene,
        noise: *spec,
        seed,
    })
}

/// `normalize(μ + Rᵀ(δ, 0))` with `R` aligning `μ` to the z-axis.
fn perturb_tangent(mu: &UnitVector3, delta: &Vector2<f64>) -> Result<UnitVector3> {
    let align = omni_alignment_rotation(mu)?;
    Ok(Unit::new_normalize(
        mu.into_inner() + align.transpose() * Vector3::new(delta.x, delta.y, 0.0),
    ))
}

/// Copy of `instance` whose attached covariances come from parameters perturbed by
/// up to `offset_fraction` of each parameter range; the noise realization is kept.
pub fn offset_covariances(
    instance: &ProblemInstance,
    offset_fraction: f64,
    kappa: f64,
    rng: &mut impl Rng,
) -> Result<ProblemInstance> {
    if !(0.0..=1.0).contains(&offset_fraction) {
        return Err(Error::InvalidArgument(format!(
            "offset fraction must be in [0, 1], got {offset_fraction}"
        )));
    }
    if offset_fraction == 0.0 {
        return Ok(instance.clone());
    }
    let spec = &instance.noise;
    let (ws, wb, wa) = (1.0, 0.5, PI);
    let k = instance.scene.intrinsics();
    let scale = (2.0 * spec.level).powi(2);
    let mut pairs = Vec::with_capacity(instance.pairs.len());
    let mut attached = Vec::with_capacity(instance.pairs.len());
    for (pair, p) in instance.pairs.iter().zip(&instance.cov_params) {
        let mut jitter = |w: f64| rng.random_range(-1.0..1.0) * offset_fraction * w;
        let q = CovParams {
            s: (p.s + jitter(ws)).clamp(spec.s_range[0], spec.s_range[1]),
            beta: (p.beta + jitter(wb)).clamp(spec.beta_range[0], spec.beta_range[1]),
            alpha: (p.alpha + jitter(wa)).clamp(spec.alpha_range[0], spec.alpha_range[1]),
        };
        let cov = q.matrix() * scale;
        let cov3 = match instance.camera {
            CameraKind::Pinhole => {
                let f = pair.f_target.into_inner();
                let px = k.project(&f).ok_or_else(|| {
                    Error::InvalidArgument("target bearing behind the pinhole camera".into())
                })?;
                unscented_pinhole(&px, &cov, &k, kappa)?.1
            }
            CameraKind::Omni => {
                unscented_omni(&pair.f_target, &(cov / instance.scene.focal_px.powi(2)), kappa)?
            }
        };
        pairs.push(BearingPair { cov_target: cov3, ..*pair });
        attached.push(q);
    }
    Ok(ProblemInstance {
        pairs: CorrespondenceSet::new(pairs)?,
        attached_params: attached,
        ..instance.clone()
    })
}

/// SplitMix64 finalizer.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Per-trial seed, a hash of `(master, cell, trial)`.
pub fn trial_seed(master: u64, cell: u64, trial: u64) -> u64 {
    splitmix64(splitmix64(splitmix64(master) ^ cell) ^ trial)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    Nec,
    Pnec,
}

impl Estimator {
    pub fn name(&self) -> &'static str {
        match self {
            Estimator::Nec => "nec",
            Estimator::Pnec => "pnec",
        }
    }
}

/// Solver starting point for synthetic trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode", deny_unknown_fields)]
pub enum InitMode {
    /// `R = I`, `t = (0, 0, 1)`.
    Identity,
    /// Ground-truth rotation composed with a random rotation of the given angle.
    PerturbedTruth { degrees: f64 },
}

/// One grid cell of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub camera: CameraKind,
    pub translation: bool,
    pub noise: NoiseSpec,
    pub offset_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSetup {
    pub scene: SceneConfig,
    pub solver: SolverConfig,
    pub init: InitMode,
    pub estimators: Vec<Estimator>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub e_rot: f64,
    /// `None` without translation.
    pub e_t: Option<f64>,
    /// PNEC energy at the estimate with the attached covariances.
    pub energy: f64,
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub cell: usize,
    pub estimator: Estimator,
    pub trials: usize,
    pub failures: usize,
    pub mean_e_rot: f64,
    pub std_e_rot: f64,
    pub mean_e_t: Option<f64>,
    pub std_e_t: Option<f64>,
    pub median_energy: f64,
    pub mean_wall_time: f64,
}

/// Instance of one trial, shared by all estimators.
pub fn trial_instance(
    setup: &ExperimentSetup,
    cell: &Cell,
    cell_index: usize,
    trial: usize,
    master_seed: u64,
) -> Result<ProblemInstance> {
    let scene = SceneConfig { translation_enabled: cell.translation, ..setup.scene };
    let cell_seed = trial_seed(master_seed, cell_index as u64, u64::MAX);
    let exp = ExperimentParams::sample(&cell.noise, &mut ChaCha8Rng::seed_from_u64(cell_seed));
    let seed = trial_seed(master_seed, cell_index as u64, trial as u64);
    let inst = generate_instance(&scene, &cell.noise, cell.camera, &exp, setup.solver.kappa, seed)?;
    if cell.offset_fraction > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ 0x0FF5E7));
        offset_covariances(&inst, cell.offset_fraction, setup.solver.kappa, &mut rng)
    } else {
        Ok(inst)
    }
}

/// Starting rotation for a trial.
pub fn initial_rotation(init: &InitMode, instance: &ProblemInstance) -> Rotation3 {
    match init {
        InitMode::Identity => Rotation3::identity(),
        InitMode::PerturbedTruth { degrees } => {
            let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(instance.seed ^ 0x1A17));
            let axis = random_unit(&mut rng);
            instance.truth.rotation * Rotation3::from_axis_angle(&axis, degrees.to_radians())
        }
    }
}

pub fn run_trial(
    setup: &ExperimentSetup,
    instance: &ProblemInstance,
    estimator: Estimator,
) -> Result<TrialResult> {
    let r0 = initial_rotation(&setup.init, instance);
    let report = match estimator {
        Estimator::Nec => nec_estimate(&instance.pairs, &setup.solver, &r0)?,
        Estimator::Pnec => pnec_estimate(&instance.pairs, &setup.solver, &r0, &Vector3::z_axis())?,
    };
    let pose = report.pose;
    let energy = pnec_energy(&instance.pairs, &pose.rotation, &pose.translation, setup.solver.reg())?;
    Ok(TrialResult {
        e_rot: rotation_error(&instance.truth.rotation, &pose.rotation),
        e_t: (instance.translation_norm > 0.0)
            .then(|| translation_error(&instance.truth.translation, &pose.translation)),
        energy,
        wall_time: report.wall_time,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn median(values: &mut [f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    if values.len() % 2 == 1 {
        values[m]
    } else {
        (values[m - 1] + values[m]) / 2.0
    }
}

/// Raw per-trial results, indexed `[cell][estimator][trial]`.
pub type TrialTable = Vec<Vec<Vec<Result<TrialResult>>>>;

fn check_setup(setup: &ExperimentSetup) -> Result<()> {
    setup.solver.validate()?;
    setup.scene.validate()?;
    if setup.estimators.is_empty() {
        return Err(Error::InvalidArgument("no estimators selected".into()));
    }
    Ok(())
}

/// Worker pool with `parallelism` threads (at least one).
pub fn thread_pool(parallelism: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism.max(1))
        .build()
        .map_err(|e| Error::Numeric { context: "thread pool", detail: e.to_string() })
}

/// All trials of one cell, indexed `[estimator][trial]`, on the current rayon pool.
///
/// `cell_index` is the cell's position in its experiment grid and enters every seed.
pub fn run_cell(
    setup: &ExperimentSetup,
    cell: &Cell,
    cell_index: usize,
    trials: usize,
    master_seed: u64,
) -> Result<Vec<Vec<Result<TrialResult>>>> {
    check_setup(setup)?;
    let per_trial: Vec<Vec<Result<TrialResult>>> = (0..trials)
        .into_par_iter()
        .map(|t| match trial_instance(setup, cell, cell_index, t, master_seed) {
            Ok(inst) => setup.estimators.iter().map(|e| run_trial(setup, &inst, *e)).collect(),
            Err(err) => setup.estimators.iter().map(|_| Err(err.clone())).collect(),
        })
        .collect();
    let mut out: Vec<Vec<Result<TrialResult>>> =
        setup.estimators.iter().map(|_| Vec::with_capacity(trials)).collect();
    for per_est in per_trial {
        for (e, res) in per_est.into_iter().enumerate() {
            out[e].push(res);
        }
    }
    Ok(out)
}

/// Run every `(cell, trial)` on a pool of `parallelism` threads.
pub fn run_trials(
    cells: &[Cell],
    setup: &ExperimentSetup,
    trials: usize,
    parallelism: usize,
    master_seed: u64,
) -> Result<TrialTable> {
    check_setup(setup)?;
    let pool = thread_pool(parallelism)?;
    pool.install(|| {
        cells
            .iter()
            .enumerate()
            .map(|(c, cell)| run_cell(setup, cell, c, trials, master_seed))
            .collect()
    })
}

/// Statistics of one cell's results (`[estimator][trial]`).
pub fn summarize_cell(
    cell_index: usize,
    results: &[Vec<Result<TrialResult>>],
    estimators: &[Estimator],
) -> Vec<CellSummary> {
    results
        .iter()
        .zip(estimators)
        .map(|(results, est)| {
            let ok: Vec<&TrialResult> = results.iter().filter_map(|r| r.as_ref().ok()).collect();
            let rot: Vec<f64> = ok.iter().map(|r| r.e_rot).collect();
            let tr: Vec<f64> = ok.iter().filter_map(|r| r.e_t).collect();
            let mut energy: Vec<f64> = ok.iter().map(|r| r.energy).collect();
            let wall: Vec<f64> = ok.iter().map(|r| r.wall_time).collect();
            let (mr, sr) = mean_std(&rot);
            let (mt, st) = mean_std(&tr);
            CellSummary {
                cell: cell_index,
                estimator: *est,
                trials: results.len(),
                failures: results.len() - ok.len(),
                mean_e_rot: mr,
                std_e_rot: sr,
                mean_e_t: (!tr.is_empty()).then_some(mt),
                std_e_t: (!tr.is_empty()).then_some(st),
                median_energy: median(&mut energy),
                mean_wall_time: mean_std(&wall).0,
            }
        })
        .collect()
}

pub fn summarize(table: &TrialTable, estimators: &[Estimator]) -> Vec<CellSummary> {
    table
        .iter()
        .enumerate()
        .flat_map(|(c, per_cell)| summarize_cell(c, per_cell, estimators))
        .collect()
}

/// Per-cell, per-estimator statistics, ordered by cell then by `setup.estimators`.
pub fn run_experiment(
    cells: &[Cell],
    setup: &ExperimentSetup,
    trials: usize,
    parallelism: usize,
    master_seed: u64,
) -> Result<Vec<CellSummary>> {
    let table = run_trials(cells, setup, trials, parallelism, master_seed)?;
    Ok(summarize(&table, &setup.estimators))
}
