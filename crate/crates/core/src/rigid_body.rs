//! Torque-free rigid-body dynamics and geometric time integration.
//!
//! The velocity follows the reduced body-frame equation of motion
//! `Lambda dV/dt = ad*_V Lambda V` and the pose follows the reconstruction
//! formula `dg/dt = g [V]^`. Integration is a classical four-stage
//! Runge-Kutta on the velocity coupled with exponential pose reconstruction
//! in log-coordinates (stage rates mapped through the right Jacobian), so the
//! pose never leaves SE(3).

use crate::se3::{b_r, Pose, Twist, Wrench};
use nalgebra::{Matrix3, Matrix6, Vector3};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InertiaError {
    #[error("rotational inertia is not symmetric (defect {defect:.3e})")]
    NotSymmetric { defect: f64 },
    #[error("rotational inertia is not positive definite")]
    NotPositiveDefinite,
    #[error("mass must be positive, got {mass}")]
    NonPositiveMass { mass: f64 },
}

/// Generalized 6x6 inertia `blockdiag(I, m I3)`, stored as the 3x3 rotational
/// part plus the scalar mass, with the rotational inverse cached.
#[derive(Debug, Clone, PartialEq)]
pub struct Inertia {
    rotational: Matrix3<f64>,
    rotational_inv: Matrix3<f64>,
    mass: f64,
}

impl Inertia {
    pub fn new(rotational: Matrix3<f64>, mass: f64) -> Result<Self, InertiaError> {
        let defect = (rotational - rotational.transpose()).abs().max();
        if defect > 1e-12 * rotational.abs().max().max(1.0) {
            return Err(InertiaError::NotSymmetric { defect });
        }
        if mass <= 0.0 {
            return Err(InertiaError::NonPositiveMass { mass });
        }
        if nalgebra::Cholesky::new(rotational).is_none() {
            return Err(InertiaError::NotPositiveDefinite);
        }
        let rotational_inv = rotational
            .try_inverse()
            .ok_or(InertiaError::NotPositiveDefinite)?;
        Ok(Inertia { rotational, rotational_inv, mass })
    }

    pub fn diagonal(ixx: f64, iyy: f64, izz: f64, mass: f64) -> Result<Self, InertiaError> {
        Self::new(Matrix3::from_diagonal(&Vector3::new(ixx, iyy, izz)), mass)
    }

    pub fn rotational(&self) -> &Matrix3<f64> {
        &self.rotational
    }

    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Full 6x6 generalized inertia matrix.
    pub fn generalized(&self) -> Matrix6<f64> {
        let mut m = Matrix6::zeros();
        m.fixed_view_mut::<3, 3>(0, 0).copy_from(&self.rotational);
        m.fixed_view_mut::<3, 3>(3, 3)
            .copy_from(&(self.mass * Matrix3::identity()));
        m
    }

    /// Largest singular value of the generalized inertia.
    pub fn max_singular_value(&self) -> f64 {
        self.rotational
            .symmetric_eigenvalues()
            .iter()
            .fold(self.mass, |acc, &l| acc.max(l.abs()))
    }

    /// Largest singular value of the rotational block alone.
    pub fn max_singular_value_rotational(&self) -> f64 {
        self.rotational
            .symmetric_eigenvalues()
            .iter()
            .fold(0.0f64, |acc, &l| acc.max(l.abs()))
    }

    /// Momentum map `h = Lambda V`.
    pub fn apply(&self, v: &Twist) -> Wrench {
        Wrench::new(self.rotational * v.angular, self.mass * v.linear)
    }

    /// Inverse momentum map `V = Lambda^{-1} h`.
    pub fn solve(&self, f: &Wrench) -> Twist {
        Twist::new(self.rotational_inv * f.rotational, f.translational / self.mass)
    }
}

/// Pose and body velocity of a free rigid body.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidBodyState {
    pub pose: Pose,
    pub velocity: Twist,
}

impl RigidBodyState {
    pub fn new(pose: Pose, velocity: Twist) -> Self {
        RigidBodyState { pose, velocity }
    }
}

/// Coadjoint action without forming the 6x6 matrix: `ad*_x h`.
pub(crate) fn coad_apply(x: &Twist, h: &Wrench) -> Wrench {
    Wrench::new(
        h.rotational.cross(&x.angular) + h.translational.cross(&x.linear),
        h.translational.cross(&x.angular),
    )
}

/// Body acceleration of torque-free motion: `Lambda^{-1} ad*_V Lambda V`.
pub fn free_acceleration(inertia: &Inertia, velocity: &Twist) -> Twist {
    let momentum = inertia.apply(velocity);
    inertia.solve(&coad_apply(velocity, &momentum))
}

/// Kinetic energy `0.5 <V, Lambda V>`.
pub fn kinetic_energy(inertia: &Inertia, velocity: &Twist) -> f64 {
    0.5 * inertia.apply(velocity).pair(velocity)
}

/// Momentum in the inertial frame, `Ad_{g^-1}^T Lambda V`; conserved along
/// exact free-motion trajectories.
pub fn spatial_momentum(state: &RigidBodyState, inertia: &Inertia) -> Wrench {
    let body = inertia.apply(&state.velocity);
    let ad_inv_t = state.pose.inverse().adjoint().transpose();
    Wrench::from_vector(&(ad_inv_t * body.to_vector()))
}

/// One RK4 step of the coupled pose/velocity flow.
///
/// `f(v)` returns the body direction of the pose (the twist in `dg = g[.]^dt`)
/// and the velocity rate at velocity `v`. The pose update is reconstructed as
/// `g exp(Theta)` where `Theta` integrates `B_r(Theta) * direction`.
pub(crate) fn rk4_pose_vel_step<F>(pose: &Pose, vel: &Twist, dt: f64, f: F) -> (Pose, Twist)
where
    F: Fn(&Twist) -> (Twist, Twist),
{
    let half = 0.5 * dt;
    let (d1, a1) = f(vel);
    let t1 = d1; // B_r(0) = I

    let (d2, a2) = f(&(*vel + half * a1));
    let t2 = b_r_apply(&(half * t1), &d2);

    let (d3, a3) = f(&(*vel + half * a2));
    let t3 = b_r_apply(&(half * t2), &d3);

    let (d4, a4) = f(&(*vel + dt * a3));
    let t4 = b_r_apply(&(dt * t3), &d4);

    let sixth = dt / 6.0;
    let theta = sixth * (t1 + 2.0 * t2 + 2.0 * t3 + t4);
    let v_new = *vel + sixth * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
    (pose * &theta.exp(), v_new)
}

fn b_r_apply(theta: &Twist, dir: &Twist) -> Twist {
    let jac = b_r(theta).expect("time step too large: stage increment reached the pi singularity");
    Twist::from_vector(&(jac * dir.to_vector()))
}

/// Advance a free rigid body by `dt`.
pub fn integrate_step(state: &RigidBodyState, inertia: &Inertia, dt: f64) -> RigidBodyState {
    let (pose, velocity) = rk4_pose_vel_step(&state.pose, &state.velocity, dt, |v| {
        (*v, free_acceleration(inertia, v))
    });
    RigidBodyState { pose, velocity }
}
