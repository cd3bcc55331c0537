//! Body-to-inertial rotation from a sampled angular velocity.

use nalgebra::{Quaternion, UnitQuaternion};

use crate::linalg::Vec3;

/// Integrates `dQ/dt = Q S(omega)` on uniformly spaced samples of `omega`.
///
/// Each interval uses the exact rotation for the midpoint angular velocity,
/// which is second-order accurate; the quaternion is renormalized after every
/// step. Returns one rotation per sample, starting from the identity.
pub fn reconstruct_orientation(omega_history: &[Vec3], dt: f64) -> Vec<UnitQuaternion<f64>> {
    let mut out = Vec::with_capacity(omega_history.len());
    let mut q = UnitQuaternion::identity();
    if omega_history.is_empty() {
        return out;
    }
    out.push(q);
    for pair in omega_history.windows(2) {
        q = advance(&q, &((pair[0] + pair[1]) * 0.5), dt);
        out.push(q);
    }
    out
}

/// One step of `dQ/dt = Q S(omega)` with constant `omega`.
pub fn advance(q: &UnitQuaternion<f64>, omega: &Vec3, dt: f64) -> UnitQuaternion<f64> {
    let increment = UnitQuaternion::from_scaled_axis(omega * dt);
    let next: Quaternion<f64> = q.into_inner() * increment.into_inner();
    UnitQuaternion::new_normalize(next)
}

/// Incremental version of [`reconstruct_orientation`] for use inside a run.
#[derive(Debug, Clone, Copy)]
pub struct OrientationTracker {
    q: UnitQuaternion<f64>,
    last_omega: Option<Vec3>,
}

impl Default for OrientationTracker {
    fn default() -> Self {
        Self::new()
    }
}

impl OrientationTracker {
    pub fn new() -> Self {
        Self { q: UnitQuaternion::identity(), last_omega: None }
    }

    pub fn from_parts(q: UnitQuaternion<f64>, last_omega: Option<Vec3>) -> Self {
        Self { q, last_omega }
    }

    /// Record the angular velocity at the end of a step of length `dt`.
    pub fn push(&mut self, omega: &Vec3, dt: f64) {
        if let Some(prev) = self.last_omega {
            self.q = advance(&self.q, &((prev + omega) * 0.5), dt);
        }
        self.last_omega = Some(*omega);
    }

    pub fn rotation(&self) -> UnitQuaternion<f64> {
        self.q
    }

    pub fn last_omega(&self) -> Option<Vec3> {
        self.last_omega
    }

    /// Body-frame vector expressed in the inertial frame.
    pub fn to_inertial(&self, body: &Vec3) -> Vec3 {
        self.q * body
    }
}
