//! Energy, dissipation and convergence diagnostics, and matching of a
//! terminal state against steady branches.

use serde::Serialize;

use crate::dynamics::evaluate;
use crate::error::{Error, Result};
use crate::fields::{velocity_gradient, FluidState, RigidState};
use crate::geometry::Geometry;
use crate::linalg::Vec3;
use crate::physics::PhysicalConstants;
use crate::steady::{angle_between, SteadyBranch};

/// `int rho |u|^2 + 2a/(gamma-1) int rho^gamma + omega . I_C omega + m_B |xi|^2`.
pub fn energy(geometry: &Geometry, constants: &PhysicalConstants, state: &FluidState, rigid: &RigidState) -> f64 {
    let mut kinetic = 0.0;
    let mut internal = 0.0;
    for ((r, v), x) in state.rho.iter().zip(&state.v).zip(geometry.centers()) {
        kinetic += r * (v + rigid.rigid_velocity(x)).norm_squared();
        internal += r.powf(constants.gamma);
    }
    let vol = geometry.cell_volume();
    kinetic * vol
        + 2.0 * constants.a / (constants.gamma - 1.0) * internal * vol
        + rigid.omega.dot(&(geometry.body_inertia() * rigid.omega))
        + geometry.body_mass() * rigid.xi.norm_squared()
}

/// Cell quadrature of `2 S(grad v) : grad v` with central differences.
pub fn dissipation_rate(geometry: &Geometry, constants: &PhysicalConstants, state: &FluidState) -> f64 {
    2.0 * geometry.cell_volume()
        * velocity_gradient(geometry, &state.v).iter().map(|g| constants.dissipation_density(g)).sum::<f64>()
}

/// Energy sink of the discrete scheme: viscous plus filter dissipation.
///
/// This is the rate that closes the discrete energy balance exactly.
pub fn scheme_dissipation_rate(
    geometry: &Geometry,
    constants: &PhysicalConstants,
    filter: f64,
    state: &FluidState,
    rigid: &RigidState,
) -> f64 {
    evaluate(geometry, constants, filter, state, rigid).total_dissipation()
}

pub fn fluid_mass(geometry: &Geometry, rho: &[f64]) -> f64 {
    geometry.integrate(rho)
}

/// Discrete `L^2(C)` norm of a vector field.
pub fn l2_vector(geometry: &Geometry, v: &[Vec3]) -> f64 {
    (v.iter().map(|x| x.norm_squared()).sum::<f64>() * geometry.cell_volume()).sqrt()
}

/// Discrete `L^2(C)` norm of a scalar field.
pub fn l2_scalar(geometry: &Geometry, q: &[f64]) -> f64 {
    (q.iter().map(|x| x * x).sum::<f64>() * geometry.cell_volume()).sqrt()
}

/// Discrete `L^2(C)` distance between two scalar fields.
pub fn l2_distance(geometry: &Geometry, a: &[f64], b: &[f64]) -> f64 {
    (a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() * geometry.cell_volume()).sqrt()
}

/// One row of the diagnostics time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiagnosticsRecord {
    pub step: u64,
    pub t: f64,
    pub energy: f64,
    /// Scheme dissipation rate (viscous plus filter).
    pub dissipation_rate: f64,
    /// `E(t) + int_0^t dissipation - E(0)`.
    pub energy_residual: f64,
    pub mass: f64,
    pub m_norm: f64,
    pub psi: f64,
    pub v_l2: f64,
    pub omega_x: f64,
    pub omega_y: f64,
    pub omega_z: f64,
    pub xi_x: f64,
    pub xi_y: f64,
    pub xi_z: f64,
    pub sigma_linf: f64,
}

impl DiagnosticsRecord {
    pub fn omega(&self) -> Vec3 {
        Vec3::new(self.omega_x, self.omega_y, self.omega_z)
    }

    pub fn xi(&self) -> Vec3 {
        Vec3::new(self.xi_x, self.xi_y, self.xi_z)
    }
}

/// Discrete stand-in for the `psi` functional:
/// `|v|^2 + |sigma|^2 + |dv/dt|^2 + |dsigma/dt|^2` with `sigma = rho - rho_bar`
/// and time derivatives from consecutive samples.
#[derive(Debug, Clone, Default)]
pub struct PsiMonitor {
    previous: Option<(f64, Vec<Vec3>, Vec<f64>)>,
}

impl PsiMonitor {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, geometry: &Geometry, t: f64, state: &FluidState, rho_bar: f64) -> f64 {
        let vol = geometry.cell_volume();
        let v2: f64 = state.v.iter().map(|v| v.norm_squared()).sum();
        let s2: f64 = state.rho.iter().map(|r| (r - rho_bar) * (r - rho_bar)).sum();
        let mut psi = (v2 + s2) * vol;
        if let Some((t0, v0, r0)) = &self.previous {
            let dt = t - t0;
            if dt > 0.0 {
                let dv: f64 = state.v.iter().zip(v0).map(|(a, b)| (a - b).norm_squared()).sum();
                let dr: f64 = state.rho.iter().zip(r0).map(|(a, b)| (a - b) * (a - b)).sum();
                psi += (dv + dr) * vol / (dt * dt);
            }
        }
        self.previous = Some((t, state.v.clone(), state.rho.clone()));
        psi
    }
}

/// Thresholds for declaring an Omega-limit candidate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Deserialize, Serialize)]
#[serde(deny_unknown_fields, default)]
pub struct ConvergenceThresholds {
    pub v_l2: f64,
    /// Bound on the variation of `omega`, `xi` and `rho` (L^2) over a window.
    pub variation: f64,
    /// Window length in steps.
    pub window: usize,
}

impl Default for ConvergenceThresholds {
    fn default() -> Self {
        Self { v_l2: 1e-6, variation: 1e-8, window: 100 }
    }
}

/// State the trajectory appears to settle on.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub t: f64,
    pub omega: Vec3,
    pub xi: Vec3,
    pub rho: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ConvergenceStatus {
    Running,
    Converged(Candidate),
}

impl ConvergenceStatus {
    pub fn is_converged(&self) -> bool {
        matches!(self, ConvergenceStatus::Converged(_))
    }
}

/// Windowed convergence detection.
///
/// Each call to [`ConvergenceMonitor::push`] adds one step. A window opens
/// at the first sample; once `window` further samples have arrived the
/// maximum deviation of `omega`, `xi` and `rho` from the window start is
/// compared with the variation threshold and the latest `v_l2` with its
/// threshold. A failed window restarts at the current sample.
#[derive(Debug, Clone)]
pub struct ConvergenceMonitor {
    thresholds: ConvergenceThresholds,
    start: Option<(Vec3, Vec3, Vec<f64>)>,
    count: usize,
    max_variation: f64,
}

impl ConvergenceMonitor {
    pub fn new(thresholds: ConvergenceThresholds) -> Self {
        Self { thresholds, start: None, count: 0, max_variation: 0.0 }
    }

    pub fn thresholds(&self) -> &ConvergenceThresholds {
        &self.thresholds
    }

    pub fn push(&mut self, geometry: &Geometry, t: f64, state: &FluidState, rigid: &RigidState) -> ConvergenceStatus {
        let Some((w0, x0, r0)) = &self.start else {
            self.start = Some((rigid.omega, rigid.xi, state.rho.clone()));
            self.count = 0;
            self.max_variation = 0.0;
            return ConvergenceStatus::Running;
        };
        let variation = (rigid.omega - w0)
            .amax()
            .max((rigid.xi - x0).amax())
            .max(l2_distance(geometry, &state.rho, r0));
        self.max_variation = self.max_variation.max(variation);
        self.count += 1;
        if self.count < self.thresholds.window.max(1) {
            return ConvergenceStatus::Running;
        }
        let v_l2 = l2_vector(geometry, &state.v);
        if v_l2 < self.thresholds.v_l2 && self.max_variation < self.thresholds.variation {
            return ConvergenceStatus::Converged(Candidate {
                t,
                omega: rigid.omega,
                xi: rigid.xi,
                rho: state.rho.clone(),
            });
        }
        self.start = Some((rigid.omega, rigid.xi, state.rho.clone()));
        self.count = 0;
        self.max_variation = 0.0;
        ConvergenceStatus::Running
    }
}

/// Distances from a candidate to its nearest steady branch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BranchDistance {
    /// Position in the branch list.
    pub branch: usize,
    /// `+1` or `-1`: which of `(omega_s, xi_s)`, `(-omega_s, -xi_s)` is nearest.
    pub sign: f64,
    pub rho_l2: f64,
    pub omega: f64,
    pub xi: f64,
    /// Angle between the candidate's `omega` and the angular momentum (radians).
    pub axis_angle: f64,
}

/// Nearest branch over all branches and both signs.
///
/// Distance is `|omega - omega_s| + |xi - xi_s| + |rho - rho_s|_2`.
pub fn compare_to_branch(
    geometry: &Geometry,
    candidate: &Candidate,
    branches: &[SteadyBranch],
    angular_momentum: &Vec3,
) -> Result<BranchDistance> {
    if branches.is_empty() {
        return Err(Error::EmptyBranchList);
    }
    let axis_angle = if candidate.omega.norm() == 0.0 || angular_momentum.norm() == 0.0 {
        0.0
    } else {
        angle_between(&candidate.omega, angular_momentum)
    };
    let mut best: Option<(f64, BranchDistance)> = None;
    for (index, branch) in branches.iter().enumerate() {
        let rho_l2 = l2_distance(geometry, &candidate.rho, &branch.rho);
        for sign in [1.0, -1.0] {
            let omega = (candidate.omega - branch.omega * sign).norm();
            let xi = (candidate.xi - branch.xi * sign).norm();
            let score = omega + xi + rho_l2;
            if best.as_ref().is_none_or(|(s, _)| score < *s) {
                best = Some((score, BranchDistance { branch: index, sign, rho_l2, omega, xi, axis_angle }));
            }
        }
    }
    Ok(best.expect("non-empty branch list").1)
}
