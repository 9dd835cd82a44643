//! Single-run and Monte-Carlo execution of the closed estimation loop.
//!
//! Every run is fully determined by `(config, base_seed, run_index)`: two
//! independent ChaCha streams are derived per run, one for the scenario
//! sample and one for the measurement noise, so runs can execute in any
//! order (or in parallel) without changing a single output byte.

use crate::config::{rotation_from_euler_xyz, ConfigError, ScenarioConfig};
use crate::measurement::{NoiseModel, OutlierGate, TimedMeasurement};
use crate::observer::{
    continuous_injection_step, error_diagnostics, ClosedLoopState, ObserverError, ObserverState,
};
use crate::rigid_body::{integrate_step, Inertia, InertiaError, RigidBodyState};
use crate::se3::{LieError, Pose, Twist};
use nalgebra::{Vector3, Vector6};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Observer(#[from] ObserverError),
    #[error(transparent)]
    Inertia(#[from] InertiaError),
    #[error("run {run_index}: could not sample a positive-definite inertia within {attempts} attempts")]
    SpdSamplingFailed { run_index: u64, attempts: u32 },
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the scenario-sampling stream for one run.
pub fn scenario_seed(base_seed: u64, run_index: u64) -> u64 {
    splitmix64(base_seed.wrapping_add(run_index))
}

/// Seed of the measurement-noise stream for one run.
pub fn noise_seed(base_seed: u64, run_index: u64) -> u64 {
    splitmix64(base_seed.wrapping_add(run_index) ^ 0xD1B5_4A32_D192_ED03)
}

const SPD_SAMPLING_ATTEMPTS: u32 = 100;

/// Draw the per-run plant: inertia and initial truth state, uniform within
/// the configured bounds.
///
/// Draw order is fixed: six independent entries of the symmetric inertia
/// perturbation (upper triangle, row-major), mass, Euler angles, position,
/// velocity. The perturbed inertia is symmetric by construction and checked
/// positive definite, resampling on failure.
pub fn sample_scenario(
    cfg: &ScenarioConfig,
    run_index: u64,
) -> Result<(Inertia, RigidBodyState), SimError> {
    let mut rng = ChaCha8Rng::seed_from_u64(scenario_seed(cfg.mc.base_seed, run_index));
    let mut uniform = |half_width: f64| -> f64 {
        // always consume a draw so the stream layout is schedule-independent
        let u: f64 = rng.random_range(-1.0..=1.0);
        u * half_width
    };

    let nominal_rot = cfg.inertia.rot_matrix();
    let bound_rot = cfg.inertia.rot_bound_matrix();
    let mut inertia = None;
    let mut mass = 0.0;
    for attempt in 0..SPD_SAMPLING_ATTEMPTS {
        let mut rot = nominal_rot;
        for (i, j) in [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)] {
            let d = uniform(bound_rot[(i, j)]);
            rot[(i, j)] += d;
            if i != j {
                rot[(j, i)] += d;
            }
        }
        if attempt == 0 {
            mass = cfg.inertia.mass + uniform(cfg.inertia.mass_bound);
        }
        if let Ok(sample) = Inertia::new(rot, mass) {
            inertia = Some(sample);
            break;
        }
    }
    let inertia = inertia.ok_or(SimError::SpdSamplingFailed {
        run_index,
        attempts: SPD_SAMPLING_ATTEMPTS,
    })?;

    let euler = [
        cfg.truth.euler_xyz[0] + uniform(cfg.truth.euler_xyz_bound[0]),
        cfg.truth.euler_xyz[1] + uniform(cfg.truth.euler_xyz_bound[1]),
        cfg.truth.euler_xyz[2] + uniform(cfg.truth.euler_xyz_bound[2]),
    ];
    let mut position = Vector3::zeros();
    for i in 0..3 {
        position[i] = cfg.truth.position[i] + uniform(cfg.truth.position_bound[i]);
    }
    let mut velocity = Vector6::zeros();
    for i in 0..6 {
        velocity[i] = cfg.truth.velocity[i] + uniform(cfg.truth.velocity_bound[i]);
    }
    let pose = Pose::new(rotation_from_euler_xyz(&euler), position);
    Ok((inertia, RigidBodyState::new(pose, Twist::from_vector(&velocity))))
}

/// One recorded epoch of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunEpoch {
    pub time: f64,
    pub truth_pose: Pose,
    pub truth_velocity: Twist,
    pub estimate_pose: Pose,
    pub estimate_velocity: Twist,
    pub epsilon: Twist,
    pub velocity_error: Twist,
    pub lyapunov_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    /// The truth/estimate error log became singular; the record holds the
    /// epochs up to the failure.
    Diverged { time: f64, reason: String },
}

/// Final configuration-space errors: translation of `eta` and the rotation
/// log of `eta` in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinalErrors {
    pub position: Vector3<f64>,
    pub orientation_deg: Vector3<f64>,
}

impl FinalErrors {
    pub fn position_norm(&self) -> f64 {
        self.position.norm()
    }

    pub fn orientation_norm_deg(&self) -> f64 {
        self.orientation_deg.norm()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub run_index: u64,
    pub status: RunStatus,
    pub epochs: Vec<RunEpoch>,
    pub finals: Option<FinalErrors>,
}

fn final_errors(truth: &RigidBodyState, estimate: &Pose) -> Result<FinalErrors, LieError> {
    let eta = &estimate.inverse() * &truth.pose;
    let theta = eta.rotation().log()?;
    Ok(FinalErrors {
        position: *eta.translation(),
        orientation_deg: theta.map(|v| v.to_degrees()),
    })
}

/// Execute one run: propagate the sampled truth at `dt`, sample measurements
/// at the period `T`, perturb them, feed the observer, and record the
/// diagnostics at every measurement epoch.
pub fn run_single(cfg: &ScenarioConfig, run_index: u64) -> Result<RunRecord, SimError> {
    let (gains, _) = cfg.gains()?;
    let nominal_inertia = cfg.nominal_inertia()?;
    let (true_inertia, truth0) = sample_scenario(cfg, run_index)?;
    let model = cfg.measurement_model();

    if cfg.observer.continuous_injection {
        return run_continuous(cfg, run_index, &gains, &nominal_inertia, &true_inertia, truth0);
    }

    let noise = NoiseModel::new(cfg.sigma_vector(), noise_seed(cfg.mc.base_seed, run_index));
    let mut noise_stream = noise.stream();
    let mut gate = cfg
        .noise
        .outlier_threshold
        .filter(|_| cfg.noise.outlier_gate_enabled)
        .map(|t| OutlierGate::new(Vector6::from_row_slice(&t)));

    let dt = cfg.sim.dt;
    let period = cfg.measurement.period;
    let steps_per_epoch = (period / dt).round() as usize;
    let n_epochs = (cfg.sim.duration / period + 1e-9).floor() as usize + 1;

    let mut truth = truth0;
    let mut observer =
        ObserverState::new(cfg.observer_initial_pose(), cfg.observer_initial_velocity());
    let mut epochs = Vec::with_capacity(n_epochs);
    let mut status = RunStatus::Completed;

    for k in 0..n_epochs {
        let time = k as f64 * period;
        let measured = noise_stream.perturb(&model.apply(&truth.pose));
        observer = observer.ingest_measurement(
            &model,
            &TimedMeasurement { time, pose: measured },
            gate.as_mut(),
        )?;
        match error_diagnostics(&truth, &observer, &gains, &nominal_inertia) {
            Ok(d) => epochs.push(RunEpoch {
                time,
                truth_pose: truth.pose,
                truth_velocity: truth.velocity,
                estimate_pose: *observer.pose_estimate(),
                estimate_velocity: *observer.velocity_estimate(),
                epsilon: d.epsilon,
                velocity_error: d.velocity_error,
                lyapunov_w: d.lyapunov_w,
            }),
            Err(e) => {
                status = RunStatus::Diverged { time, reason: e.to_string() };
                break;
            }
        }
        if k + 1 < n_epochs {
            for _ in 0..steps_per_epoch {
                truth = integrate_step(&truth, &true_inertia, dt);
                observer = observer.step(&gains, &nominal_inertia, dt);
            }
        }
    }

    let finals = match status {
        RunStatus::Completed => final_errors(&truth, observer.pose_estimate()).ok(),
        RunStatus::Diverged { .. } => None,
    };
    Ok(RunRecord { run_index, status, epochs, finals })
}

fn run_continuous(
    cfg: &ScenarioConfig,
    run_index: u64,
    gains: &crate::observer::ObserverGains,
    nominal_inertia: &Inertia,
    true_inertia: &Inertia,
    truth0: RigidBodyState,
) -> Result<RunRecord, SimError> {
    let model = cfg.measurement_model();
    let dt = cfg.sim.dt;
    let n_steps = (cfg.sim.duration / dt + 1e-9).round() as usize;
    let mut state = ClosedLoopState {
        truth: truth0,
        observer_pose: cfg.observer_initial_pose(),
        observer_velocity: cfg.observer_initial_velocity(),
    };
    let mut epochs = Vec::with_capacity(n_steps + 1);
    let mut status = RunStatus::Completed;

    for k in 0..=n_steps {
        let time = k as f64 * dt;
        let snapshot = ObserverState::new(state.observer_pose, state.observer_velocity);
        match error_diagnostics(&state.truth, &snapshot, gains, nominal_inertia) {
            Ok(d) => epochs.push(RunEpoch {
                time,
                truth_pose: state.truth.pose,
                truth_velocity: state.truth.velocity,
                estimate_pose: state.observer_pose,
                estimate_velocity: state.observer_velocity,
                epsilon: d.epsilon,
                velocity_error: d.velocity_error,
                lyapunov_w: d.lyapunov_w,
            }),
            Err(e) => {
                status = RunStatus::Diverged { time, reason: e.to_string() };
                break;
            }
        }
        if k < n_steps {
            match continuous_injection_step(&state, gains, true_inertia, nominal_inertia, &model, dt)
            {
                Ok(next) => state = next,
                Err(e) => {
                    status = RunStatus::Diverged { time, reason: e.to_string() };
                    break;
                }
            }
        }
    }

    let finals = match status {
        RunStatus::Completed => final_errors(&state.truth, &state.observer_pose).ok(),
        RunStatus::Diverged { .. } => None,
    };
    Ok(RunRecord { run_index, status, epochs, finals })
}

/// Monte-Carlo summary statistics over the completed runs.
#[derive(Debug, Clone, PartialEq)]
pub struct McSummary {
    pub runs: u64,
    pub completed: u64,
    pub failed_runs: Vec<u64>,
    pub mean_position_error: Vector3<f64>,
    pub std_position_error: Vector3<f64>,
    pub mean_orientation_error_deg: Vector3<f64>,
    pub std_orientation_error_deg: Vector3<f64>,
    pub max_position_error_norm: f64,
    pub min_position_error_norm: f64,
    pub max_orientation_error_norm_deg: f64,
    pub min_orientation_error_norm_deg: f64,
}

fn summarize(runs: u64, records: &[RunRecord]) -> McSummary {
    let finals: Vec<&FinalErrors> = records.iter().filter_map(|r| r.finals.as_ref()).collect();
    let failed_runs: Vec<u64> = records
        .iter()
        .filter(|r| r.finals.is_none())
        .map(|r| r.run_index)
        .collect();
    let n = finals.len() as f64;
    let mut mean_p = Vector3::zeros();
    let mut mean_t = Vector3::zeros();
    for f in &finals {
        mean_p += f.position;
        mean_t += f.orientation_deg;
    }
    if n > 0.0 {
        mean_p /= n;
        mean_t /= n;
    }
    let mut var_p = Vector3::zeros();
    let mut var_t = Vector3::zeros();
    if n > 1.0 {
        for f in &finals {
            let dp = f.position - mean_p;
            let dt_ = f.orientation_deg - mean_t;
            var_p += dp.component_mul(&dp);
            var_t += dt_.component_mul(&dt_);
        }
        var_p /= n - 1.0;
        var_t /= n - 1.0;
    }
    let norms_p: Vec<f64> = finals.iter().map(|f| f.position_norm()).collect();
    let norms_t: Vec<f64> = finals.iter().map(|f| f.orientation_norm_deg()).collect();
    let fold_max = |v: &[f64]| v.iter().copied().fold(f64::NAN, f64::max);
    let fold_min = |v: &[f64]| v.iter().copied().fold(f64::NAN, f64::min);
    McSummary {
        runs,
        completed: finals.len() as u64,
        failed_runs,
        mean_position_error: mean_p,
        std_position_error: var_p.map(f64::sqrt),
        mean_orientation_error_deg: mean_t,
        std_orientation_error_deg: var_t.map(f64::sqrt),
        max_position_error_norm: fold_max(&norms_p),
        min_position_error_norm: fold_min(&norms_p),
        max_orientation_error_norm_deg: fold_max(&norms_t),
        min_orientation_error_norm_deg: fold_min(&norms_t),
    }
}

/// Run the full Monte-Carlo campaign sequentially.
pub fn run_monte_carlo_serial(cfg: &ScenarioConfig) -> Result<(McSummary, Vec<RunRecord>), SimError> {
    cfg.gains()?; // fail fast on an invalid certificate
    let records: Vec<RunRecord> = (0..cfg.mc.runs)
        .map(|i| run_single(cfg, i))
        .collect::<Result<_, _>>()?;
    Ok((summarize(cfg.mc.runs, &records), records))
}

/// Run the full Monte-Carlo campaign, on the rayon pool when the `parallel`
/// feature is enabled. Aggregation is an ordered reduction by run index, so
/// the summary is identical to sequential execution.
#[cfg(feature = "parallel")]
pub fn run_monte_carlo(cfg: &ScenarioConfig) -> Result<(McSummary, Vec<RunRecord>), SimError> {
    use rayon::prelude::*;
    cfg.gains()?;
    let records: Vec<RunRecord> = (0..cfg.mc.runs)
        .into_par_iter()
        .map(|i| run_single(cfg, i))
        .collect::<Result<_, _>>()?;
    Ok((summarize(cfg.mc.runs, &records), records))
}

#[cfg(not(feature = "parallel"))]
pub fn run_monte_carlo(cfg: &ScenarioConfig) -> Result<(McSummary, Vec<RunRecord>), SimError> {
    run_monte_carlo_serial(cfg)
}
