//! Material law of the barotropic viscous fluid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Mat3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicalConstants {
    /// Pressure coefficient in `p = a rho^gamma`.
    pub a: f64,
    pub gamma: f64,
    /// Shear viscosity.
    pub mu: f64,
    /// Second viscosity parameter.
    #[serde(default)]
    pub lambda: f64,
}

impl PhysicalConstants {
    pub fn new(a: f64, gamma: f64, mu: f64, lambda: f64) -> Result<Self> {
        let c = Self { a, gamma, mu, lambda };
        c.validate()?;
        Ok(c)
    }

    /// Every violated constraint, in a fixed order.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !(self.a > 0.0 && self.a.is_finite()) {
            out.push(format!("a must be positive, got {}", self.a));
        }
        if !(self.gamma > 1.0 && self.gamma.is_finite()) {
            out.push(format!("gamma must exceed 1, got {}", self.gamma));
        }
        if !(self.mu > 0.0 && self.mu.is_finite()) {
            out.push(format!("mu must be positive, got {}", self.mu));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            out.push(format!("lambda must be non-negative, got {}", self.lambda));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Constants(v.join("; ")))
        }
    }

    pub fn pressure(&self, rho: f64) -> Result<f64> {
        if rho < 0.0 {
            return Err(Error::NegativeDensity(rho));
        }
        Ok(self.a * rho.powf(self.gamma))
    }

    /// `p'(rho) = a gamma rho^(gamma - 1)`.
    pub fn pressure_derivative(&self, rho: f64) -> Result<f64> {
        if rho < 0.0 {
            return Err(Error::NegativeDensity(rho));
        }
        Ok(self.a * self.gamma * rho.powf(self.gamma - 1.0))
    }

    pub fn sound_speed(&self, rho: f64) -> Result<f64> {
        self.pressure_derivative(rho).map(f64::sqrt)
    }

    /// Specific enthalpy `a gamma / (gamma - 1) rho^(gamma - 1)`; its
    /// gradient times `rho` is the pressure gradient.
    #[inline]
    pub fn enthalpy(&self, rho: f64) -> f64 {
        self.a * self.gamma / (self.gamma - 1.0) * rho.powf(self.gamma - 1.0)
    }

    /// Coefficient of `(div v) 1` in the viscous stress.
    pub fn bulk_coefficient(&self) -> f64 {
        self.lambda - 2.0 * self.mu / 3.0
    }

    /// `S = mu (grad v + grad v^T) + (lambda - 2 mu / 3) (div v) 1`.
    pub fn viscous_stress(&self, grad_v: &Mat3) -> Mat3 {
        self.mu * (grad_v + grad_v.transpose()) + Mat3::identity() * (self.bulk_coefficient() * grad_v.trace())
    }

    /// `S(grad v) : grad v`, non-negative for admissible constants.
    pub fn dissipation_density(&self, grad_v: &Mat3) -> f64 {
        self.viscous_stress(grad_v).component_mul(grad_v).sum()
    }
}
