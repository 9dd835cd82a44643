//! Scenario configuration: a flat, typed key-value file with dotted section
//! names (TOML syntax), strictly validated. Unknown keys are rejected.
//!
//! Angles are radians, lengths meters, times seconds. Initial orientations
//! are X-Y-Z sequence Euler angles (`R = Rx(a) Ry(b) Rz(c)`). Uncertainty
//! bounds are half-widths of independent uniform intervals centred on the
//! nominal values; a zero bound pins the quantity.

use crate::measurement::MeasurementModel;
use crate::observer::{make_gains, GainCertificate, ObserverError, ObserverGains};
use crate::rigid_body::{Inertia, InertiaError, RigidBodyState};
use crate::se3::{Pose, Rotation, Twist};
use nalgebra::{Matrix3, Vector3, Vector6};
use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse config: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {reason}")]
    Validation { field: String, reason: String },
    #[error(transparent)]
    Inertia(#[from] InertiaError),
}

fn invalid(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation { field: field.to_string(), reason: reason.into() }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InertiaConfig {
    /// Nominal mass in kg and its uncertainty half-width.
    pub mass: f64,
    pub mass_bound: f64,
    /// Nominal rotational inertia, row-major 3x3 [kg m^2].
    pub rot_row_major: [f64; 9],
    /// Entrywise uncertainty half-widths (symmetric matrix), row-major.
    pub rot_bound_row_major: [f64; 9],
}

impl InertiaConfig {
    pub fn rot_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.rot_row_major)
    }

    pub fn rot_bound_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.rot_bound_row_major)
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthConfig {
    pub euler_xyz: [f64; 3],
    pub euler_xyz_bound: [f64; 3],
    pub position: [f64; 3],
    pub position_bound: [f64; 3],
    /// Body twist `[wx, wy, wz, vx, vy, vz]`.
    pub velocity: [f64; 6],
    pub velocity_bound: [f64; 6],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObserverConfig {
    #[serde(default)]
    pub euler_xyz: [f64; 3],
    #[serde(default)]
    pub position: [f64; 3],
    #[serde(default = "zeros6")]
    pub velocity: [f64; 6],
    /// Re-evaluate the error injection inside every integrator stage instead
    /// of holding sampled measurements. Requires noiseless measurements with
    /// `measurement.period == sim.dt`.
    #[serde(default)]
    pub continuous_injection: bool,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        ObserverConfig {
            euler_xyz: [0.0; 3],
            position: [0.0; 3],
            velocity: [0.0; 6],
            continuous_injection: false,
        }
    }
}

fn zeros6() -> [f64; 6] {
    [0.0; 6]
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainsConfig {
    pub p1: f64,
    /// Angular-block weight of `P2`.
    pub p21: f64,
    /// Linear-block weight of `P2`.
    pub p22: f64,
    /// Declared worst-case initial orientation error in radians, < pi.
    pub psi0_bound: f64,
    /// Declared worst-case initial angular-velocity error [rad/s].
    pub omega_e0_bound: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeasurementConfig {
    /// Sampling period T in seconds.
    pub period: f64,
    #[serde(default)]
    pub left_euler_xyz: [f64; 3],
    #[serde(default)]
    pub left_position: [f64; 3],
    #[serde(default)]
    pub right_euler_xyz: [f64; 3],
    #[serde(default)]
    pub right_position: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Per-axis standard deviations of the tangent-space noise
    /// `[rad x3, m x3]`.
    pub sigma: [f64; 6],
    #[serde(default)]
    pub outlier_gate_enabled: bool,
    #[serde(default)]
    pub outlier_threshold: Option<[f64; 6]>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub duration: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McConfig {
    pub runs: u64,
    pub base_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub name: String,
    pub inertia: InertiaConfig,
    pub truth: TruthConfig,
    #[serde(default)]
    pub observer: ObserverConfig,
    pub gains: GainsConfig,
    pub measurement: MeasurementConfig,
    pub noise: NoiseConfig,
    pub sim: SimConfig,
    pub mc: McConfig,
}

impl ScenarioConfig {
    /// Parse and validate a configuration from text.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ScenarioConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Load and validate a configuration file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(invalid(
                "schema_version",
                format!("expected {SCHEMA_VERSION}, got {}", self.schema_version),
            ));
        }
        if self.inertia.mass.is_nan() || self.inertia.mass <= 0.0 {
            return Err(invalid("inertia.mass", "must be positive"));
        }
        if self.inertia.mass_bound < 0.0 || self.inertia.mass_bound >= self.inertia.mass {
            return Err(invalid("inertia.mass_bound", "must be in [0, mass)"));
        }
        let rot = self.inertia.rot_matrix();
        let asym = (rot - rot.transpose()).abs().max();
        if asym > 1e-9 * rot.abs().max().max(1.0) {
            return Err(invalid("inertia.rot_row_major", "matrix must be symmetric"));
        }
        if nalgebra::Cholesky::new(rot).is_none() {
            return Err(invalid("inertia.rot_row_major", "matrix must be positive definite"));
        }
        let bound = self.inertia.rot_bound_matrix();
        if (bound - bound.transpose()).abs().max() > 1e-9 * bound.abs().max().max(1.0) {
            return Err(invalid("inertia.rot_bound_row_major", "matrix must be symmetric"));
        }
        if bound.iter().any(|b| *b < 0.0) {
            return Err(invalid("inertia.rot_bound_row_major", "entries must be non-negative"));
        }
        for (field, bounds) in [
            ("truth.euler_xyz_bound", &self.truth.euler_xyz_bound[..]),
            ("truth.position_bound", &self.truth.position_bound[..]),
            ("truth.velocity_bound", &self.truth.velocity_bound[..]),
        ] {
            if bounds.iter().any(|b| *b < 0.0) {
                return Err(invalid(field, "bounds must be non-negative"));
            }
        }
        for (field, value) in [
            ("gains.p1", self.gains.p1),
            ("gains.p21", self.gains.p21),
            ("gains.p22", self.gains.p22),
        ] {
            if value.is_nan() || value <= 0.0 {
                return Err(invalid(field, "must be positive"));
            }
        }
        if !(0.0..std::f64::consts::PI).contains(&self.gains.psi0_bound) {
            return Err(invalid("gains.psi0_bound", "must be in [0, pi)"));
        }
        if self.gains.omega_e0_bound < 0.0 {
            return Err(invalid("gains.omega_e0_bound", "must be non-negative"));
        }
        if self.sim.dt.is_nan() || self.sim.dt <= 0.0 {
            return Err(invalid("sim.dt", "must be positive"));
        }
        if self.sim.duration.is_nan() || self.sim.duration <= 0.0 {
            return Err(invalid("sim.duration", "must be positive"));
        }
        if self.measurement.period < self.sim.dt {
            return Err(invalid("measurement.period", "must be at least sim.dt"));
        }
        let ratio = self.measurement.period / self.sim.dt;
        if (ratio - ratio.round()).abs() > 1e-6 {
            return Err(invalid(
                "measurement.period",
                "must be an integer multiple of sim.dt",
            ));
        }
        if self.noise.sigma.iter().any(|s| *s < 0.0) {
            return Err(invalid("noise.sigma", "must be non-negative"));
        }
        if self.noise.outlier_gate_enabled {
            match &self.noise.outlier_threshold {
                None => {
                    return Err(invalid(
                        "noise.outlier_threshold",
                        "required when the outlier gate is enabled",
                    ))
                }
                Some(t) if t.iter().any(|v| v.is_nan() || *v <= 0.0) => {
                    return Err(invalid("noise.outlier_threshold", "entries must be positive"))
                }
                _ => {}
            }
        }
        if self.observer.continuous_injection {
            if self.measurement.period != self.sim.dt {
                return Err(invalid(
                    "observer.continuous_injection",
                    "requires measurement.period == sim.dt",
                ));
            }
            if self.noise.sigma.iter().any(|s| *s != 0.0) {
                return Err(invalid(
                    "observer.continuous_injection",
                    "requires noiseless measurements (noise.sigma = 0)",
                ));
            }
            if self.noise.outlier_gate_enabled {
                return Err(invalid(
                    "observer.continuous_injection",
                    "cannot be combined with the outlier gate",
                ));
            }
        }
        if self.mc.runs < 1 {
            return Err(invalid("mc.runs", "must be at least 1"));
        }
        Ok(())
    }

    pub fn nominal_inertia(&self) -> Result<Inertia, ConfigError> {
        Ok(Inertia::new(self.inertia.rot_matrix(), self.inertia.mass)?)
    }

    pub fn nominal_truth_state(&self) -> RigidBodyState {
        RigidBodyState::new(
            pose_from_euler_position(&self.truth.euler_xyz, &self.truth.position),
            Twist::from_vector(&Vector6::from_row_slice(&self.truth.velocity)),
        )
    }

    pub fn observer_initial_pose(&self) -> Pose {
        pose_from_euler_position(&self.observer.euler_xyz, &self.observer.position)
    }

    pub fn observer_initial_velocity(&self) -> Twist {
        Twist::from_vector(&Vector6::from_row_slice(&self.observer.velocity))
    }

    pub fn measurement_model(&self) -> MeasurementModel {
        MeasurementModel::new(
            pose_from_euler_position(&self.measurement.left_euler_xyz, &self.measurement.left_position),
            pose_from_euler_position(&self.measurement.right_euler_xyz, &self.measurement.right_position),
        )
    }

    pub fn sigma_vector(&self) -> Vector6<f64> {
        Vector6::from_row_slice(&self.noise.sigma)
    }

    /// Build the observer gains and their validity certificate.
    pub fn gains(&self) -> Result<(ObserverGains, GainCertificate), ObserverError> {
        let inertia = self
            .nominal_inertia()
            .map_err(|_| ObserverError::InvalidParameter { name: "inertia", value: f64::NAN })?;
        make_gains(
            self.gains.p1,
            self.gains.p21,
            self.gains.p22,
            self.gains.psi0_bound,
            self.gains.omega_e0_bound,
            &inertia,
        )
    }
}

/// Rotation from X-Y-Z sequence Euler angles: `R = Rx(a) Ry(b) Rz(c)`.
pub fn rotation_from_euler_xyz(angles: &[f64; 3]) -> Rotation {
    let rx = Rotation::exp(&Vector3::new(angles[0], 0.0, 0.0));
    let ry = Rotation::exp(&Vector3::new(0.0, angles[1], 0.0));
    let rz = Rotation::exp(&Vector3::new(0.0, 0.0, angles[2]));
    &(&rx * &ry) * &rz
}

fn pose_from_euler_position(angles: &[f64; 3], position: &[f64; 3]) -> Pose {
    Pose::new(rotation_from_euler_xyz(angles), Vector3::from_row_slice(position))
}

pub const PRESET_ENVISAT: &str = include_str!("../presets/envisat.cfg");
pub const PRESET_OOSSIM_SPIN: &str = include_str!("../presets/oossim_spin.cfg");

pub fn preset_names() -> &'static [&'static str] {
    &["envisat", "oossim_spin"]
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    match name {
        "envisat" => Some(PRESET_ENVISAT),
        "oossim_spin" => Some(PRESET_OOSSIM_SPIN),
        _ => None,
    }
}

pub fn load_preset(name: &str) -> Result<ScenarioConfig, ConfigError> {
    let text = preset_text(name).ok_or_else(|| {
        invalid("preset", format!("unknown preset `{name}`; available: {:?}", preset_names()))
    })?;
    ScenarioConfig::parse(text)
}
