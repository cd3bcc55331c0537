//! Run orchestration: stepping, diagnostics output, checkpoints and manifests.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::diagnostics::{
    energy, fluid_mass, l2_vector, scheme_dissipation_rate, Candidate, ConvergenceMonitor, ConvergenceStatus,
    ConvergenceThresholds, DiagnosticsRecord, PsiMonitor,
};
use crate::dynamics::{rigid_from_angular_momentum, rigid_from_omega, stable_dt, step, IntegratorSettings, StepReport};
use crate::error::{Error, Result};
use crate::fields::{FluidState, RigidState};
use crate::geometry::Geometry;
use crate::initial::perturbed_state;
use crate::linalg::Vec3;
use crate::orientation::OrientationTracker;
use crate::physics::PhysicalConstants;
use crate::steady::{SteadyBranch, NEWTON_MAX_ITER, NEWTON_TOL};

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const FINAL_CHECKPOINT: &str = "final.ckpt";

/// A time-dependent run with its bookkeeping.
#[derive(Debug, Clone)]
pub struct Simulation {
    geometry: Geometry,
    constants: PhysicalConstants,
    settings: IntegratorSettings,
    fixed_dt: Option<f64>,
    state: FluidState,
    rigid: RigidState,
    step: u64,
    time: f64,
    energy0: f64,
    dissipated: f64,
    tracker: OrientationTracker,
    psi: PsiMonitor,
    monitor: ConvergenceMonitor,
    rho_bar: f64,
    last_dt: f64,
}

impl Simulation {
    pub fn new(
        geometry: Geometry,
        constants: PhysicalConstants,
        settings: IntegratorSettings,
        state: FluidState,
        rigid: RigidState,
        thresholds: ConvergenceThresholds,
    ) -> Self {
        let energy0 = energy(&geometry, &constants, &state, &rigid);
        let rho_bar = fluid_mass(&geometry, &state.rho) / geometry.volume();
        let mut tracker = OrientationTracker::new();
        tracker.push(&rigid.omega, 0.0);
        let mut monitor = ConvergenceMonitor::new(thresholds);
        monitor.push(&geometry, 0.0, &state, &rigid);
        Self {
            geometry,
            constants,
            settings,
            fixed_dt: None,
            state,
            rigid,
            step: 0,
            time: 0.0,
            energy0,
            dissipated: 0.0,
            tracker,
            psi: PsiMonitor::new(),
            monitor,
            rho_bar,
            last_dt: 0.0,
        }
    }

    /// Initial state described by a configuration.
    pub fn from_config(cfg: &RunConfig) -> Result<Self> {
        let geometry = cfg.geometry.build()?;
        cfg.constants.validate()?;
        let init = &cfg.initial;
        let state = perturbed_state(&geometry, init.density, init.v_amplitude, init.rho_amplitude, cfg.seed);
        let rigid = match (init.angular_momentum, init.omega) {
            (_, Some(w)) => rigid_from_omega(&geometry, &state, Vec3::from(w)),
            (m, None) => rigid_from_angular_momentum(&geometry, &state, m.map(Vec3::from).unwrap_or_else(Vec3::zeros))?,
        };
        let mut sim = Self::new(geometry, cfg.constants, settings_of(cfg), state, rigid, cfg.diagnostics.convergence);
        sim.fixed_dt = cfg.integrator.dt;
        Ok(sim)
    }

    /// Continue from a checkpoint written by a run with the same configuration.
    pub fn resume(cfg: &RunConfig, ckpt: &Checkpoint) -> Result<Self> {
        if ckpt.dims != cfg.geometry.grid {
            return Err(Error::Checkpoint(format!(
                "checkpoint grid {:?} does not match configured grid {:?}",
                ckpt.dims, cfg.geometry.grid
            )));
        }
        let geometry = cfg.geometry.build()?;
        let mut sim = Self::new(
            geometry,
            cfg.constants,
            settings_of(cfg),
            ckpt.fluid.clone(),
            ckpt.rigid,
            cfg.diagnostics.convergence,
        );
        sim.fixed_dt = cfg.integrator.dt;
        sim.step = ckpt.step;
        sim.time = ckpt.time;
        sim.energy0 = ckpt.energy0;
        sim.dissipated = ckpt.dissipated;
        sim.tracker = ckpt.tracker();
        sim.rho_bar = cfg.initial.density;
        Ok(sim)
    }

    pub fn with_fixed_dt(mut self, dt: Option<f64>) -> Self {
        self.fixed_dt = dt;
        self
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geometry
    }

    pub fn constants(&self) -> &PhysicalConstants {
        &self.constants
    }

    pub fn state(&self) -> &FluidState {
        &self.state
    }

    pub fn rigid(&self) -> &RigidState {
        &self.rigid
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn energy0(&self) -> f64 {
        self.energy0
    }

    /// Dissipation integrated so far (doubled-energy units).
    pub fn dissipated(&self) -> f64 {
        self.dissipated
    }

    pub fn orientation(&self) -> &OrientationTracker {
        &self.tracker
    }

    /// Angular momentum in the inertial frame, `Q M`.
    pub fn inertial_angular_momentum(&self) -> Vec3 {
        self.tracker.to_inertial(&self.rigid.angular_momentum)
    }

    /// Step size for the next step: the fixed step if configured, else the CFL bound.
    pub fn next_dt(&self) -> f64 {
        self.fixed_dt
            .unwrap_or_else(|| stable_dt(&self.geometry, &self.constants, self.settings.cfl, &self.state, &self.rigid))
    }

    /// Advance by `dt`, returning the convergence status after the step.
    pub fn advance(&mut self, dt: f64) -> Result<(StepReport, ConvergenceStatus)> {
        let (state, rigid, report) = step(&self.geometry, &self.constants, &self.settings, &self.state, &self.rigid, dt)?;
        self.state = state;
        self.rigid = rigid;
        self.step += 1;
        self.time += dt;
        self.last_dt = dt;
        self.dissipated += report.viscous_dissipated + report.filter_dissipated;
        self.tracker.push(&self.rigid.omega, dt);
        let status = self.monitor.push(&self.geometry, self.time, &self.state, &self.rigid);
        Ok((report, status))
    }

    /// `E(t) + int dissipation - E(0)`.
    pub fn energy_residual(&self) -> f64 {
        energy(&self.geometry, &self.constants, &self.state, &self.rigid) + self.dissipated - self.energy0
    }

    pub fn record(&mut self) -> DiagnosticsRecord {
        let g = &self.geometry;
        let e = energy(g, &self.constants, &self.state, &self.rigid);
        let omega = self.rigid.omega;
        let xi = self.rigid.xi;
        DiagnosticsRecord {
            step: self.step,
            t: self.time,
            energy: e,
            dissipation_rate: scheme_dissipation_rate(g, &self.constants, self.settings.filter, &self.state, &self.rigid),
            energy_residual: e + self.dissipated - self.energy0,
            mass: fluid_mass(g, &self.state.rho),
            m_norm: self.rigid.angular_momentum.norm(),
            psi: self.psi.update(g, self.time, &self.state, self.rho_bar),
            v_l2: l2_vector(g, &self.state.v),
            omega_x: omega.x,
            omega_y: omega.y,
            omega_z: omega.z,
            xi_x: xi.x,
            xi_y: xi.y,
            xi_z: xi.z,
            sigma_linf: self.state.rho.iter().map(|r| (r - self.rho_bar).abs()).fold(0.0, f64::max),
        }
    }

    pub fn candidate(&self) -> Candidate {
        Candidate { t: self.time, omega: self.rigid.omega, xi: self.rigid.xi, rho: self.state.rho.clone() }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            dims: self.geometry.dims(),
            step: self.step,
            time: self.time,
            fluid: self.state.clone(),
            rigid: self.rigid,
            orientation: self.tracker.rotation(),
            last_omega: self.tracker.last_omega(),
            energy0: self.energy0,
            dissipated: self.dissipated,
        }
    }
}

fn settings_of(cfg: &RunConfig) -> IntegratorSettings {
    IntegratorSettings { cfl: cfg.integrator.cfl, filter: cfg.integrator.filter }
}

/// Stopping rules and output cadence for [`run`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunLimits {
    pub max_steps: u64,
    pub max_time: Option<f64>,
    pub output_every: u64,
    pub stop_on_convergence: bool,
}

impl RunLimits {
    pub fn from_config(cfg: &RunConfig) -> Self {
        Self {
            max_steps: cfg.integrator.max_steps,
            max_time: cfg.integrator.max_time,
            output_every: cfg.diagnostics.output_every,
            stop_on_convergence: cfg.diagnostics.stop_on_convergence,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub steps: u64,
    pub time: f64,
    pub status: ConvergenceStatus,
    pub last: DiagnosticsRecord,
}

/// Step until a limit is hit or convergence is detected.
///
/// `sink` receives the initial record, every `output_every`-th record and the
/// final record. `on_step` runs after each step (for periodic checkpoints).
pub fn run(
    sim: &mut Simulation,
    limits: &RunLimits,
    mut sink: impl FnMut(&DiagnosticsRecord) -> Result<()>,
    mut on_step: impl FnMut(&Simulation) -> Result<()>,
) -> Result<RunOutcome> {
    let mut last = sim.record();
    sink(&last)?;
    let mut status = ConvergenceStatus::Running;
    let mut emitted = sim.step_count();
    let start = sim.step_count();
    while sim.step_count() - start < limits.max_steps {
        let mut dt = sim.next_dt();
        if let Some(t_end) = limits.max_time {
            let remaining = t_end - sim.time();
            if remaining <= 0.0 {
                break;
            }
            dt = dt.min(remaining);
        }
        let (_, s) = sim.advance(dt)?;
        status = s;
        on_step(sim)?;
        let done = limits.stop_on_convergence && status.is_converged();
        if sim.step_count() % limits.output_every.max(1) == 0 || done {
            last = sim.record();
            sink(&last)?;
            emitted = sim.step_count();
        }
        if done {
            break;
        }
    }
    if emitted != sim.step_count() {
        last = sim.record();
        sink(&last)?;
    }
    Ok(RunOutcome { steps: sim.step_count(), time: sim.time(), status, last })
}

/// Reproducibility manifest written next to every output.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest<'a> {
    pub code_version: &'a str,
    pub command: &'a str,
    pub seed: u64,
    pub grid: [usize; 3],
    pub cells: usize,
    pub newton_tolerance: f64,
    pub newton_max_iterations: usize,
    pub config: &'a RunConfig,
}

/// Checkpoint at rest relative to the body on a steady branch, usable with
/// `simulate --resume`.
pub fn steady_checkpoint(geometry: &Geometry, constants: &PhysicalConstants, branch: &SteadyBranch) -> Checkpoint {
    let fluid = FluidState { rho: branch.rho.clone(), v: vec![Vec3::zeros(); geometry.n_cells()] };
    let rigid = rigid_from_omega(geometry, &fluid, branch.omega);
    Checkpoint {
        dims: geometry.dims(),
        step: 0,
        time: 0.0,
        energy0: energy(geometry, constants, &fluid, &rigid),
        dissipated: 0.0,
        fluid,
        rigid,
        orientation: OrientationTracker::new().rotation(),
        last_omega: None,
    }
}

pub fn write_manifest(dir: &Path, command: &str, cfg: &RunConfig) -> Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let manifest = Manifest {
        code_version: env!("CARGO_PKG_VERSION"),
        command,
        seed: cfg.seed,
        grid: cfg.geometry.grid,
        cells: cfg.geometry.grid.iter().product(),
        newton_tolerance: NEWTON_TOL,
        newton_max_iterations: NEWTON_MAX_ITER,
        config: cfg,
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, toml::to_string(&manifest).expect("manifest is serializable"))?;
    Ok(path)
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// Run a configuration end to end, writing `diagnostics.csv`, the manifest,
/// periodic checkpoints and a final checkpoint into `dir`.
pub fn simulate(cfg: &RunConfig, dir: &Path, resume: Option<&Path>) -> Result<(Simulation, RunOutcome)> {
    fs::create_dir_all(dir)?;
    let mut sim = match resume {
        Some(path) => Simulation::resume(cfg, &Checkpoint::load(path)?)?,
        None => Simulation::from_config(cfg)?,
    };
    write_manifest(dir, "simulate", cfg)?;
    let mut writer = csv::Writer::from_path(dir.join(DIAGNOSTICS_FILE)).map_err(csv_error)?;
    let every = cfg.output.checkpoint_every;
    let outcome = run(
        &mut sim,
        &RunLimits::from_config(cfg),
        |rec| writer.serialize(rec).map_err(csv_error),
        |s| {
            if every > 0 && s.step_count() % every == 0 {
                s.checkpoint().save(&dir.join(format!("step_{:08}.ckpt", s.step_count())))?;
            }
            Ok(())
        },
    )?;
    writer.flush()?;
    sim.checkpoint().save(&dir.join(FINAL_CHECKPOINT))?;
    Ok((sim, outcome))
}
