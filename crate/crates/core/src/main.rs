use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cavity_core::config::{parse_config, ConfigError, RunConfig};
use cavity_core::diagnostics::compare_to_branch;
use cavity_core::linalg::Vec3;
use cavity_core::run::{simulate, steady_checkpoint, write_manifest};
use cavity_core::steady::{
    check_invariants, enumerate_branches, scan_pressure_coefficient, SteadyBranch, SteadyProblem,
};
use cavity_core::verify::verify_config;
use cavity_core::Error;

#[derive(Parser)]
#[command(name = "cavity", version, about = "Rigid body with a compressible viscous fluid-filled cavity")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Time-integrate a configuration and write diagnostics.
    Simulate {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Continue from a checkpoint file.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[arg(long)]
        checkpoint_every: Option<u64>,
        #[arg(long)]
        max_steps: Option<u64>,
        #[arg(long)]
        max_time: Option<f64>,
        /// Convergence threshold on the L2 norm of v.
        #[arg(long)]
        v_tol: Option<f64>,
        /// Convergence threshold on the windowed variation.
        #[arg(long)]
        variation_tol: Option<f64>,
    },
    /// Enumerate steady rotations for the configured geometry and constants.
    Steady {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Angular momentum magnitude; defaults to |initial.angular_momentum|.
        #[arg(long)]
        m0: Option<f64>,
    },
    /// Sweep the pressure coefficient and record branch sensitivities.
    Scan {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        m0: Option<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = [1e2, 1e3, 1e4, 1e5, 1e6])]
        a: Vec<f64>,
    },
    /// Run the property suite; exits with 4 on any violation.
    Verify {
        #[arg(short, long)]
        config: PathBuf,
        /// Steps of the short conservation run.
        #[arg(long, default_value_t = 200)]
        steps: u64,
    },
    /// Simulate, then match the terminal state against the steady branches.
    Compare {
        #[arg(short, long)]
        config: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
}

enum Failure {
    Validation(String),
    Numerical(String),
    Property(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e.exit_code() {
            2 => Failure::Validation(e.to_string()),
            _ => Failure::Numerical(e.to_string()),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Validation(e.to_string())
    }
}

fn load(path: &Path) -> Result<RunConfig, Failure> {
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))?;
    Ok(parse_config(&text)?)
}

fn output_dir(cfg: &RunConfig, flag: Option<PathBuf>) -> PathBuf {
    flag.unwrap_or_else(|| cfg.output.directory.clone())
}

fn steady_problem_m0(cfg: &RunConfig, m0: Option<f64>) -> f64 {
    m0.unwrap_or_else(|| cfg.initial.angular_momentum.map(|m| Vec3::from(m).norm()).unwrap_or(0.0))
}

fn write_branches(path: &Path, branches: &[SteadyBranch], problem: &SteadyProblem) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "branch", "lambda", "omega_x", "omega_y", "omega_z", "xi_x", "xi_y", "xi_z", "c", "newton_residual",
        "iterations", "converged", "sigma_min", "condition", "rho_min", "rho_max", "density_in_band",
    ])?;
    for (i, b) in branches.iter().enumerate() {
        let inv = check_invariants(problem, b);
        let row: Vec<String> = [
            i.to_string(),
            b.lambda.to_string(),
            b.omega.x.to_string(),
            b.omega.y.to_string(),
            b.omega.z.to_string(),
            b.xi.x.to_string(),
            b.xi.y.to_string(),
            b.xi.z.to_string(),
            b.c.to_string(),
            b.newton_residual.to_string(),
            b.iterations.to_string(),
            b.converged.to_string(),
            b.sigma_min.to_string(),
            b.jacobian_condition.to_string(),
            inv.rho_min.to_string(),
            inv.rho_max.to_string(),
            inv.density_in_band.to_string(),
        ]
        .into();
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn execute(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { config, output, resume, checkpoint_every, max_steps, max_time, v_tol, variation_tol } => {
            let mut cfg = load(&config)?;
            if let Some(n) = checkpoint_every {
                cfg.output.checkpoint_every = n;
            }
            if let Some(n) = max_steps {
                cfg.integrator.max_steps = n;
            }
            if max_time.is_some() {
                cfg.integrator.max_time = max_time;
            }
            if let Some(v) = v_tol {
                cfg.diagnostics.convergence.v_l2 = v;
            }
            if let Some(v) = variation_tol {
                cfg.diagnostics.convergence.variation = v;
            }
            let bad = cfg.violations();
            if !bad.is_empty() {
                return Err(ConfigError::Invalid(bad).into());
            }
            let dir = output_dir(&cfg, output);
            let (_, outcome) = simulate(&cfg, &dir, resume.as_deref())?;
            println!(
                "steps {} t {:.6e} energy {:.12e} |v| {:.3e} converged {}",
                outcome.steps,
                outcome.time,
                outcome.last.energy,
                outcome.last.v_l2,
                outcome.status.is_converged()
            );
        }
        Command::Steady { config, output, m0 } => {
            let cfg = load(&config)?;
            let geometry = cfg.geometry.build()?;
            let problem = SteadyProblem {
                geometry: &geometry,
                constants: &cfg.constants,
                m0: steady_problem_m0(&cfg, m0),
                fluid_mass: cfg.initial.density * geometry.volume(),
            };
            let branches = enumerate_branches(&problem)?;
            for (i, b) in branches.iter().enumerate() {
                println!(
                    "branch {i}: lambda {:.12e} omega ({:.9e}, {:.9e}, {:.9e}) residual {:.2e} sigma_min {:.3e}",
                    b.lambda, b.omega.x, b.omega.y, b.omega.z, b.newton_residual, b.sigma_min
                );
            }
            if let Some(dir) = output {
                write_manifest(&dir, "steady", &cfg)?;
                write_branches(&dir.join("branches.csv"), &branches, &problem)?;
                for (i, b) in branches.iter().enumerate() {
                    steady_checkpoint(&geometry, &cfg.constants, b).save(&dir.join(format!("branch_{i}.ckpt")))?;
                }
            }
            if branches.iter().any(|b| !b.converged) {
                return Err(Failure::Numerical("Newton did not converge on every branch".into()));
            }
        }
        Command::Scan { config, output, m0, a } => {
            let cfg = load(&config)?;
            let geometry = cfg.geometry.build()?;
            let fluid_mass = cfg.initial.density * geometry.volume();
            let rows = scan_pressure_coefficient(&geometry, &cfg.constants, steady_problem_m0(&cfg, m0), fluid_mass, &a)?;
            let dir = output_dir(&cfg, output);
            write_manifest(&dir, "scan", &cfg)?;
            let mut w = csv::Writer::from_path(dir.join("scan.csv"))?;
            for r in &rows {
                w.serialize(r)?;
                println!(
                    "a {:.1e} branch {} residual {:.2e} |N| {:.4e} shift {:.4e} sigma_min {:.4e}",
                    r.a, r.branch, r.newton_residual, r.perturbation_norm, r.inertia_shift, r.sigma_min
                );
            }
            w.flush()?;
        }
        Command::Verify { config, steps } => {
            let cfg = load(&config)?;
            let checks = verify_config(&cfg, steps)?;
            let mut failed = Vec::new();
            for c in &checks {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                if !c.passed {
                    failed.push(c.name.clone());
                }
            }
            if !failed.is_empty() {
                return Err(Failure::Property(failed.join(", ")));
            }
        }
        Command::Compare { config, output } => {
            let cfg = load(&config)?;
            let dir = output_dir(&cfg, output);
            let (sim, outcome) = simulate(&cfg, &dir, None)?;
            let problem = SteadyProblem {
                geometry: sim.geometry(),
                constants: sim.constants(),
                m0: sim.rigid().angular_momentum.norm(),
                fluid_mass: outcome.last.mass,
            };
            let branches = enumerate_branches(&problem)?;
            let d = compare_to_branch(sim.geometry(), &sim.candidate(), &branches, &sim.rigid().angular_momentum)?;
            println!(
                "converged {} branch {} sign {} |rho - rho_s| {:.3e} |omega - omega_s| {:.3e} |xi - xi_s| {:.3e} angle {:.3e}",
                outcome.status.is_converged(),
                d.branch,
                d.sign,
                d.rho_l2,
                d.omega,
                d.xi,
                d.axis_angle
            );
            let mut w = csv::Writer::from_path(dir.join("compare.csv"))?;
            w.serialize(d)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let (code, msg) = match f {
                Failure::Validation(m) => (2, m),
                Failure::Numerical(m) => (3, m),
                Failure::Property(m) => (4, format!("property violation: {m}")),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
