//! Property checks run by the `verify` command and the test suites.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::Result;
use crate::geometry::{central_inertia_direct, compute_mass_properties, Geometry};
use crate::linalg::{sym_eigen, Vec3};
use crate::run::{run, RunLimits, Simulation};
use crate::steady::{
    assemble_grad_f, check_invariants, enumerate_branches, finite_difference_jacobian, SteadyProblem,
    SteadyUnknowns,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl PropertyCheck {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.to_string(), passed, detail }
    }
}

/// Random smooth positive density with values in `[0.5, 1.5]`.
pub fn random_density(geometry: &Geometry, rng: &mut impl Rng) -> Vec<f64> {
    let k: Vec<f64> = (0..9).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: f64 = k.iter().map(|x| x.abs()).sum::<f64>().max(1e-12);
    let sides = geometry.sides();
    geometry
        .centers()
        .iter()
        .map(|x| {
            let s = [0, 1, 2].map(|d| x[d] / sides[d]);
            let mut q = 0.0;
            for d in 0..3 {
                q += k[3 * d] * (3.0 * s[d]).sin() + k[3 * d + 1] * (5.0 * s[d]).cos() + k[3 * d + 2] * s[d];
            }
            1.0 + 0.5 * q / w
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MassPropertyStats {
    pub max_asymmetry: f64,
    pub min_eigenvalue: f64,
    /// Largest `a.I_g.a - (m_F/m_S) a.I_bar.a`, normalized by `a.I_bar.a`; must be `<= 0`.
    pub lagrange_margin: f64,
    /// Largest relative difference between the direct central inertia and `I_C + I_bar - I_g`.
    pub steiner_error: f64,
}

/// Symmetry, positivity, the Lagrange inequality and Steiner consistency
/// over `samples` random densities and directions.
pub fn mass_property_suite(geometry: &Geometry, samples: usize, seed: u64) -> Result<MassPropertyStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats =
        MassPropertyStats { max_asymmetry: 0.0, min_eigenvalue: f64::INFINITY, lagrange_margin: f64::NEG_INFINITY, steiner_error: 0.0 };
    for _ in 0..samples {
        let rho = random_density(geometry, &mut rng);
        let p = compute_mass_properties(geometry, &rho)?;
        let i = p.inertia_total;
        stats.max_asymmetry = stats.max_asymmetry.max((i - i.transpose()).amax() / i.amax());
        stats.min_eigenvalue = stats.min_eigenvalue.min(sym_eigen(&i).values[0]);
        let a = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let lhs = a.dot(&(p.inertia_g * a));
        let bar = a.dot(&(p.inertia_bar * a));
        stats.lagrange_margin = stats.lagrange_margin.max((lhs - p.fluid_mass / p.system_mass * bar) / bar);
        let direct = central_inertia_direct(geometry, &rho)?;
        stats.steiner_error = stats.steiner_error.max((direct - i).amax() / i.amax());
    }
    Ok(stats)
}

/// Largest relative difference between the analytic Jacobian and central
/// finite differences at `points` random unknowns near the mean-density state.
pub fn jacobian_oracle_error(problem: &SteadyProblem, points: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rho_bar = problem.mean_density();
    let mut worst: f64 = 0.0;
    let mut u = |lo: f64, hi: f64| rng.random_range(lo..hi);
    for _ in 0..points {
        let omega = Vec3::new(u(-1.0, 1.0), u(-1.0, 1.0), u(-1.0, 1.0));
        let xi = Vec3::new(u(-0.05, 0.05), u(-0.05, 0.05), u(-0.05, 0.05));
        let x = SteadyUnknowns {
            lambda: u(0.01, 0.1),
            omega,
            xi,
            c: rho_bar.powf(problem.constants.gamma - 1.0) * u(0.9, 1.1),
        };
        let exact = assemble_grad_f(problem, &x)?.full();
        let fd = finite_difference_jacobian(problem, &x, 1e-5)?;
        worst = worst.max((exact - fd).amax() / exact.amax());
    }
    Ok(worst)
}

/// Full property suite for one configuration.
pub fn verify_config(cfg: &RunConfig, steps: u64) -> Result<Vec<PropertyCheck>> {
    let geometry = cfg.geometry.build()?;
    let mut out = Vec::new();

    let s = mass_property_suite(&geometry, 100, cfg.seed)?;
    out.push(PropertyCheck::new("inertia symmetric", s.max_asymmetry <= 1e-14, format!("{:e}", s.max_asymmetry)));
    out.push(PropertyCheck::new("inertia positive definite", s.min_eigenvalue > 0.0, format!("{:e}", s.min_eigenvalue)));
    out.push(PropertyCheck::new("lagrange inequality", s.lagrange_margin <= 1e-14, format!("{:e}", s.lagrange_margin)));
    out.push(PropertyCheck::new("steiner consistency", s.steiner_error <= 1e-10, format!("{:e}", s.steiner_error)));

    let fluid_mass = cfg.initial.density * geometry.volume();
    let m0 = cfg.initial.angular_momentum.map(|m| Vec3::from(m).norm()).unwrap_or(0.0);
    let problem = SteadyProblem { geometry: &geometry, constants: &cfg.constants, m0: m0.max(1e-3), fluid_mass };
    let jerr = jacobian_oracle_error(&problem, 20, cfg.seed)?;
    out.push(PropertyCheck::new("jacobian oracle", jerr <= 1e-6, format!("{jerr:e}")));

    let problem = SteadyProblem { m0, ..problem };
    match enumerate_branches(&problem) {
        Ok(branches) => {
            for (i, b) in branches.iter().enumerate() {
                let inv = check_invariants(&problem, b);
                let ok = b.converged && inv.mass_error <= 1e-12 && inv.eigen_residual <= 1e-10;
                out.push(PropertyCheck::new(
                    &format!("steady branch {i}"),
                    ok,
                    format!("residual {:e}, in band {}", b.newton_residual, inv.density_in_band),
                ));
            }
        }
        Err(e) => out.push(PropertyCheck::new("steady branches", true, format!("skipped: {e}"))),
    }

    let mut sim = Simulation::from_config(cfg)?;
    let mass0 = geometry.integrate(&sim.state().rho);
    let m_norm0 = sim.rigid().angular_momentum.norm();
    let e0 = sim.energy0();
    let limits = RunLimits { max_steps: steps, max_time: None, output_every: 1, stop_on_convergence: false };
    let mut max_increase: f64 = 0.0;
    let mut prev = f64::INFINITY;
    run(
        &mut sim,
        &limits,
        |r| {
            max_increase = max_increase.max(r.energy - prev);
            prev = r.energy;
            Ok(())
        },
        |_| Ok(()),
    )?;
    let mass_drift = (geometry.integrate(&sim.state().rho) - mass0).abs() / mass0;
    let m_drift = if m_norm0 > 0.0 { (sim.rigid().angular_momentum.norm() - m_norm0).abs() / m_norm0 } else { 0.0 };
    let residual = sim.energy_residual().abs() / e0;
    out.push(PropertyCheck::new("mass conservation", mass_drift <= 1e-12, format!("{mass_drift:e}")));
    out.push(PropertyCheck::new("angular momentum magnitude", m_drift <= 1e-8, format!("{m_drift:e}")));
    out.push(PropertyCheck::new("energy balance", residual <= 1e-3, format!("{residual:e}")));
    out.push(PropertyCheck::new(
        "energy non-increasing",
        max_increase <= 1e-12 * e0,
        format!("max increase {max_increase:e}"),
    ));
    Ok(out)
}
