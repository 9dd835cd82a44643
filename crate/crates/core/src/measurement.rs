//! Pose measurement model, error transport and tangent-space noise.
//!
//! A measurement is a composite group action `h(g_t) = g_l g_t g_r`. The
//! left-invariant measurement error `Dh = h(ghat)^-1 g_meas` is transported to
//! the configuration space through conjugation by the right action,
//! `eta = g_r Dh g_r^-1`, with log-coordinates `eps = Ad_{g_r} log(Dh)`.
//! Noise is right-multiplicative: `g~ = g exp(nu^)` with `nu` a zero-mean
//! Gaussian in the tangent space.

use crate::se3::{LieError, Pose, Twist};
use nalgebra::Vector6;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Composite left/right group action describing where the sensor sits.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementModel {
    left: Pose,
    right: Pose,
    right_inv: Pose,
}

impl MeasurementModel {
    pub fn new(left: Pose, right: Pose) -> Self {
        let right_inv = right.inverse();
        MeasurementModel { left, right, right_inv }
    }

    pub fn identity() -> Self {
        Self::new(Pose::identity(), Pose::identity())
    }

    pub fn left(&self) -> &Pose {
        &self.left
    }

    pub fn right(&self) -> &Pose {
        &self.right
    }

    /// The measurement map `h(g_t) = g_l g_t g_r`.
    pub fn apply(&self, g_t: &Pose) -> Pose {
        &(&self.left * g_t) * &self.right
    }

    /// Left-invariant measurement error `Dh = h(ghat)^-1 g_meas`.
    pub fn measurement_error(&self, estimate: &Pose, measured: &Pose) -> Pose {
        &self.apply(estimate).inverse() * measured
    }

    /// Transport a measurement error to the configuration space:
    /// `eta = g_r Dh g_r^-1` and `eps = Ad_{g_r} [log(Dh)]^v`.
    pub fn error_to_config_space(&self, dh: &Pose) -> Result<(Pose, Twist), LieError> {
        let e = dh.log()?;
        let eta = &(&self.right * dh) * &self.right_inv;
        let eps = self.right.adjoint_apply(&e);
        Ok((eta, eps))
    }
}

/// Zero-mean concentrated-Gaussian noise in the tangent space.
///
/// `sigma` holds per-axis standard deviations; the same seed replays the
/// identical noise stream bit for bit.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub sigma: Vector6<f64>,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(sigma: Vector6<f64>, seed: u64) -> Self {
        assert!(sigma.iter().all(|s| *s >= 0.0), "sigma must be non-negative");
        NoiseModel { sigma, seed }
    }

    pub fn stream(&self) -> NoiseStream {
        NoiseStream {
            sigma: self.sigma,
            rng: ChaCha8Rng::seed_from_u64(self.seed),
        }
    }
}

/// A running noise stream; one per simulation run.
#[derive(Debug, Clone)]
pub struct NoiseStream {
    sigma: Vector6<f64>,
    rng: ChaCha8Rng,
}

impl NoiseStream {
    /// Right-multiplicative perturbation `g exp(nu^)`.
    ///
    /// With all sigmas zero the input is returned unchanged (bit-exact); the
    /// RNG is still advanced by six draws so schedules stay aligned.
    pub fn perturb(&mut self, g: &Pose) -> Pose {
        let mut nu = Vector6::zeros();
        for i in 0..6 {
            let z: f64 = StandardNormal.sample(&mut self.rng);
            nu[i] = self.sigma[i] * z;
        }
        if self.sigma.iter().all(|s| *s == 0.0) {
            return *g;
        }
        g * &Twist::from_vector(&nu).exp()
    }
}

/// A timestamped noisy pose measurement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimedMeasurement {
    pub time: f64,
    pub pose: Pose,
}

/// Threshold gate on the step between consecutive accepted measurements.
///
/// Rejects a candidate iff any component of
/// `|[log(prev^-1 candidate)]^v|` strictly exceeds its threshold; a value
/// exactly at the threshold is accepted. A singular relative log also rejects.
pub fn outlier_gate(prev_accepted: &Pose, candidate: &Pose, threshold: &Vector6<f64>) -> bool {
    let rel = &prev_accepted.inverse() * candidate;
    match rel.log() {
        Ok(step) => {
            let s = step.to_vector();
            (0..6).all(|i| s[i].abs() <= threshold[i])
        }
        Err(_) => false,
    }
}

/// Stateful wrapper around [`outlier_gate`] tracking the last accepted pose.
#[derive(Debug, Clone)]
pub struct OutlierGate {
    pub threshold: Vector6<f64>,
    last_accepted: Option<Pose>,
}

impl OutlierGate {
    pub fn new(threshold: Vector6<f64>) -> Self {
        OutlierGate { threshold, last_accepted: None }
    }

    /// The first candidate is always admitted.
    pub fn admit(&mut self, candidate: &Pose) -> bool {
        let ok = match &self.last_accepted {
            None => true,
            Some(prev) => outlier_gate(prev, candidate, &self.threshold),
        };
        if ok {
            self.last_accepted = Some(*candidate);
        }
        ok
    }
}

/// One CSV row of a measurement stream: `t, r11..r33 (row-major), px, py, pz`.
pub fn measurement_csv_row(m: &TimedMeasurement) -> String {
    let r = m.pose.rotation().matrix();
    let p = m.pose.translation();
    let mut fields = Vec::with_capacity(13);
    fields.push(format!("{}", m.time));
    for i in 0..3 {
        for j in 0..3 {
            fields.push(format!("{}", r[(i, j)]));
        }
    }
    for i in 0..3 {
        fields.push(format!("{}", p[i]));
    }
    fields.join(",")
}

pub const MEASUREMENT_CSV_HEADER: &str = "t,r11,r12,r13,r21,r22,r23,r31,r32,r33,px,py,pz";
