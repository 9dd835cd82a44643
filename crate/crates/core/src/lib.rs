//! Pose and velocity estimation for a free-floating rigid body observed
//! through slow, noisy relative-pose measurements.
//!
//! The crate is organized in layers:
//!
//! - [`se3`]: closed-form SE(3)/se(3) operators (exp, log, adjoints, the
//!   right Jacobian of the logarithm) with a Bernoulli-series oracle.
//! - [`rigid_body`]: torque-free rigid-body dynamics and a geometric RK4
//!   integrator that keeps poses on the group.
//! - [`measurement`]: composite-action measurement model, error transport,
//!   concentrated-Gaussian noise and an outlier gate.
//! - [`observer`]: the nonlinear internal-model observer, its gain
//!   certificate and error diagnostics.
//! - [`sim`] / [`config`] / [`output`]: scenario configuration, single-run
//!   and Monte-Carlo execution, and CSV emission.
//!
//! Monte-Carlo runs execute on a rayon pool when the `parallel` feature
//! (default) is enabled; summaries are identical to sequential execution.

pub mod config;
pub mod measurement;
pub mod observer;
pub mod output;
pub mod rigid_body;
pub mod se3;
pub mod sim;
