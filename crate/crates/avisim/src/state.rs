//! Bodies and the mechanical state they share.
//!
//! The state is the flat record an asynchronous integrator works on: one
//! position and one velocity per body, a diagonal (lumped) mass matrix, and
//! the global clock `t_g` marking the last time positions were advanced.
//! Fixed bodies are encoded with inverse mass zero; they never move and
//! never receive impulses.

use crate::error::{Result, SimError};
use crate::math::Vec3;

/// Geometric kind of a body. A disc doubles as a sphere in 3D scenes.
#[derive(Debug, Clone, PartialEq)]
pub enum BodyKind {
    Particle,
    Disc { radius: f64 },
    /// Half-space whose boundary passes through the body position. The
    /// outward unit normal points away from the material side.
    HalfPlane { normal: Vec3 },
}

impl BodyKind {
    /// Surface offset from the body position along any direction, i.e. the
    /// radius for round bodies. Meaningless for half-planes.
    pub fn radius(&self) -> f64 {
        match self {
            BodyKind::Particle => 0.0,
            BodyKind::Disc { radius } => *radius,
            BodyKind::HalfPlane { .. } => 0.0,
        }
    }

    pub fn is_halfplane(&self) -> bool {
        matches!(self, BodyKind::HalfPlane { .. })
    }
}

/// A body: geometry plus its dense index into the state arrays.
#[derive(Debug, Clone)]
pub struct Body {
    pub index: usize,
    pub kind: BodyKind,
}

/// Positions, velocities, masses and the global clock.
#[derive(Debug, Clone)]
pub struct State {
    /// Last time positions were advanced to.
    pub t_g: f64,
    pub q: Vec<Vec3>,
    pub qdot: Vec<Vec3>,
    /// Body mass; `f64::INFINITY` for fixed bodies. Only read where
    /// `inv_mass > 0`, so the infinity never enters a sum.
    pub mass: Vec<f64>,
    /// Inverse mass; zero marks a fixed body.
    pub inv_mass: Vec<f64>,
}

impl State {
    /// Advance every movable position linearly to `t_target`. Fixed bodies
    /// keep their prescribed (constant) position. The clock itself is
    /// updated by the scheduler, not here.
    pub fn drift(&mut self, t_target: f64) -> Result<()> {
        let dt = t_target - self.t_g;
        if dt < 0.0 {
            return Err(SimError::ClockRegression { event_t: t_target, t_g: self.t_g });
        }
        for i in 0..self.q.len() {
            if self.inv_mass[i] > 0.0 {
                self.q[i] += self.qdot[i] * dt;
            }
        }
        Ok(())
    }

    /// Apply the impulse of one discrete force: `qdot -= h * M^-1 * grad`
    /// for every body in the stencil. Positions are untouched and fixed
    /// bodies ignore their share.
    pub fn kick(&mut self, grads: &[(usize, Vec3)], h: f64) -> Result<()> {
        for &(_, g) in grads {
            if !g.is_finite() {
                return Err(SimError::NonFinite { what: "force gradient", t: self.t_g });
            }
        }
        for &(i, g) in grads {
            let im = self.inv_mass[i];
            if im > 0.0 {
                self.qdot[i] -= g * (h * im);
            }
        }
        Ok(())
    }

    /// Kinetic energy `1/2 qdot^T M qdot` over movable bodies.
    pub fn kinetic_energy(&self) -> f64 {
        let mut e = 0.0;
        for i in 0..self.qdot.len() {
            if self.inv_mass[i] > 0.0 {
                e += 0.5 * self.mass[i] * self.qdot[i].norm_squared();
            }
        }
        e
    }

    /// Total linear momentum of the movable bodies.
    pub fn total_momentum(&self) -> Vec3 {
        let mut p = Vec3::ZERO;
        for i in 0..self.qdot.len() {
            if self.inv_mass[i] > 0.0 {
                p += self.qdot[i] * self.mass[i];
            }
        }
        p
    }

    pub fn is_finite(&self) -> bool {
        self.q.iter().all(|v| v.is_finite()) && self.qdot.iter().all(|v| v.is_finite())
    }
}
