//! Steady rigid rotations of the coupled system.
//!
//! A steady state has `v = 0`, a density given pointwise by
//!
//! ```text
//! rho^(gamma-1) = (gamma-1)/(2 a gamma) (|omega x x|^2 - 2 (omega x xi) . x) + c
//! ```
//!
//! and `(lambda, omega, xi, c)` solving the 8-dimensional system
//! `F = ((lambda 1 - I) omega, lambda^2 |omega|^2 - M0^2, m_S xi - g x omega, int rho - m_F)`,
//! where `I` and `g` are evaluated on that density. Branches are seeded from
//! the eigenpairs of the inertia tensor at constant density.

use nalgebra::{Matrix4, SMatrix, SVector, Vector4};

use crate::error::{Error, Result};
use crate::geometry::{compute_mass_properties, raw_moments, Geometry, MassProperties};
use crate::linalg::{inertia_kernel, skew, sym_eigen, Mat3, SymEigen, Vec3};
use crate::physics::PhysicalConstants;

pub type Vec8 = SVector<f64, 8>;
pub type Mat8 = SMatrix<f64, 8, 8>;

pub const NEWTON_TOL: f64 = 1e-12;
pub const NEWTON_MAX_ITER: usize = 50;
const MIN_DAMPING: f64 = 1.0 / 1048576.0;

/// Data shared by every steady solve on one configuration.
#[derive(Debug, Clone, Copy)]
pub struct SteadyProblem<'a> {
    pub geometry: &'a Geometry,
    pub constants: &'a PhysicalConstants,
    /// Magnitude of the conserved angular momentum.
    pub m0: f64,
    pub fluid_mass: f64,
}

impl SteadyProblem<'_> {
    pub fn system_mass(&self) -> f64 {
        self.geometry.body_mass() + self.fluid_mass
    }

    pub fn mean_density(&self) -> f64 {
        self.fluid_mass / self.geometry.volume()
    }

    fn k(&self) -> f64 {
        (self.constants.gamma - 1.0) / (2.0 * self.constants.a * self.constants.gamma)
    }
}

/// Bracket `p(omega, xi, c)` per cell; the steady density is `p^(1/(gamma-1))`.
pub fn profile_bracket(geometry: &Geometry, constants: &PhysicalConstants, omega: &Vec3, xi: &Vec3, c: f64) -> Vec<f64> {
    let k = (constants.gamma - 1.0) / (2.0 * constants.a * constants.gamma);
    let wxi = omega.cross(xi);
    geometry
        .centers()
        .iter()
        .map(|x| k * (omega.cross(x).norm_squared() - 2.0 * wxi.dot(x)) + c)
        .collect()
}

fn vacuum_check(geometry: &Geometry, bracket: &[f64]) -> Result<()> {
    let (idx, &value) = bracket
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty grid");
    if value > 0.0 {
        Ok(())
    } else {
        let (i, j, k) = geometry.ijk(idx);
        Err(Error::VacuumRegion { i, j, k, value })
    }
}

/// Steady density for given `(omega, xi, c)`.
pub fn density_profile(
    geometry: &Geometry,
    constants: &PhysicalConstants,
    omega: &Vec3,
    xi: &Vec3,
    c: f64,
) -> Result<Vec<f64>> {
    let bracket = profile_bracket(geometry, constants, omega, xi, c);
    vacuum_check(geometry, &bracket)?;
    let e = 1.0 / (constants.gamma - 1.0);
    Ok(bracket.into_iter().map(|p| p.powf(e)).collect())
}

/// Profile constant `c` with `int rho = m_F`.
///
/// The mass is strictly increasing in `c`, so a safeguarded Newton iteration
/// on a bisection bracket finds the unique root.
pub fn mass_closure(
    geometry: &Geometry,
    constants: &PhysicalConstants,
    omega: &Vec3,
    xi: &Vec3,
    fluid_mass: f64,
) -> Result<f64> {
    let base = profile_bracket(geometry, constants, omega, xi, 0.0);
    let e = 1.0 / (constants.gamma - 1.0);
    let vol = geometry.cell_volume();
    let (imin, &pmin) = base.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("non-empty grid");
    let c_floor = -pmin;
    let eval = |c: f64| -> (f64, f64) {
        let mut m = 0.0;
        let mut dm = 0.0;
        for p in &base {
            let q = p + c;
            let f = q.powf(e);
            m += f;
            dm += e * f / q;
        }
        (m * vol - fluid_mass, dm * vol)
    };

    // At c = c_floor the minimizing cell is at zero density.
    let (g_floor, _) = eval(c_floor);
    if g_floor >= 0.0 {
        let (i, j, k) = geometry.ijk(imin);
        return Err(Error::VacuumRegion { i, j, k, value: 0.0 });
    }
    let mut lo = c_floor;
    let mean = (fluid_mass / geometry.volume()).powf(constants.gamma - 1.0);
    let mut hi = c_floor.max(0.0) + mean.max(f64::MIN_POSITIVE);
    while eval(hi).0 < 0.0 {
        lo = hi;
        hi = c_floor + 2.0 * (hi - c_floor);
    }
    let avg = base.iter().sum::<f64>() / base.len() as f64;
    let mut c = (mean - avg).clamp(lo, hi);
    if c <= lo || c >= hi {
        c = 0.5 * (lo + hi);
    }
    for _ in 0..200 {
        let (g, dg) = eval(c);
        if g == 0.0 {
            return Ok(c);
        }
        if g < 0.0 {
            lo = c;
        } else {
            hi = c;
        }
        let mut next = c - g / dg;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - c).abs() <= 4.0 * f64::EPSILON * c.abs().max(f64::MIN_POSITIVE) || hi - lo <= f64::EPSILON * hi.abs() {
            return Ok(next);
        }
        c = next;
    }
    Ok(c)
}

/// Unknowns of the steady system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SteadyUnknowns {
    pub lambda: f64,
    pub omega: Vec3,
    pub xi: Vec3,
    pub c: f64,
}

impl SteadyUnknowns {
    pub fn to_vec(&self) -> Vec8 {
        Vec8::from_column_slice(&[
            self.lambda, self.omega.x, self.omega.y, self.omega.z, self.xi.x, self.xi.y, self.xi.z, self.c,
        ])
    }

    pub fn from_vec(v: &Vec8) -> Self {
        Self {
            lambda: v[0],
            omega: Vec3::new(v[1], v[2], v[3]),
            xi: Vec3::new(v[4], v[5], v[6]),
            c: v[7],
        }
    }
}

/// Mass properties of `f(omega, xi, c)` with the system mass held at `m_B + m_F`.
fn profile_properties(problem: &SteadyProblem, rho: &[f64]) -> MassProperties {
    let (mass, g, ibar) = raw_moments(problem.geometry, rho);
    MassProperties::from_integrals(problem.geometry, mass, g, ibar, problem.system_mass())
}

pub fn assemble_f(problem: &SteadyProblem, x: &SteadyUnknowns) -> Result<Vec8> {
    let rho = density_profile(problem.geometry, problem.constants, &x.omega, &x.xi, x.c)?;
    Ok(residual_from_profile(problem, x, &rho))
}

fn residual_from_profile(problem: &SteadyProblem, x: &SteadyUnknowns, rho: &[f64]) -> Vec8 {
    let props = profile_properties(problem, rho);
    let r1 = x.omega * x.lambda - props.inertia_total * x.omega;
    let r2 = x.lambda * x.lambda * x.omega.norm_squared() - problem.m0 * problem.m0;
    let r3 = x.xi * problem.system_mass() - props.first_moment.cross(&x.omega);
    let r4 = props.fluid_mass - problem.fluid_mass;
    Vec8::from_column_slice(&[r1.x, r1.y, r1.z, r2, r3.x, r3.y, r3.z, r4])
}

/// Jacobian of `F` split as `principal + perturbation + c_coupling`.
///
/// `principal` holds the terms that do not differentiate the density
/// profile; `perturbation` collects the profile derivatives with respect
/// to `omega` and `xi`; `c_coupling` the profile derivatives with respect to
/// `c` in the inertia and first-moment rows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JacobianParts {
    pub principal: Mat8,
    pub perturbation: Mat8,
    pub c_coupling: Mat8,
}

impl JacobianParts {
    pub fn full(&self) -> Mat8 {
        self.principal + self.perturbation + self.c_coupling
    }
}

pub fn assemble_grad_f(problem: &SteadyProblem, x: &SteadyUnknowns) -> Result<JacobianParts> {
    let geometry = problem.geometry;
    let bracket = profile_bracket(geometry, problem.constants, &x.omega, &x.xi, x.c);
    vacuum_check(geometry, &bracket)?;
    let e = 1.0 / (problem.constants.gamma - 1.0);
    let k = problem.k();
    let vol = geometry.cell_volume();
    let m_s = problem.system_mass();

    // derivatives of int f, int f x, int f K(x) with respect to (omega, xi, c)
    let mut dm = [0.0; 7];
    let mut dg = [Vec3::zeros(); 7];
    let mut dibar = [Mat3::zeros(); 7];
    let mut mass = 0.0;
    let mut g = Vec3::zeros();
    let mut ibar = Mat3::zeros();
    for (p, xc) in bracket.iter().zip(geometry.centers()) {
        let f = p.powf(e);
        let fp = e * f / p;
        let kern = inertia_kernel(xc);
        mass += f;
        g += xc * f;
        ibar += kern * f;
        let dp_domega = (x.omega * xc.norm_squared() - xc * x.omega.dot(xc) - x.xi.cross(xc)) * (2.0 * k);
        let dp_dxi = xc.cross(&x.omega) * (-2.0 * k);
        let mut dp = [0.0; 7];
        dp[..3].copy_from_slice(dp_domega.as_slice());
        dp[3..6].copy_from_slice(dp_dxi.as_slice());
        dp[6] = 1.0;
        for j in 0..7 {
            let df = fp * dp[j];
            dm[j] += df;
            dg[j] += xc * df;
            dibar[j] += kern * df;
        }
    }
    mass *= vol;
    g *= vol;
    ibar *= vol;
    for j in 0..7 {
        dm[j] *= vol;
        dg[j] *= vol;
        dibar[j] *= vol;
    }
    let _ = mass;
    let inertia = geometry.body_inertia() + ibar - inertia_kernel(&g) / m_s;
    let d_inertia = |j: usize| -> Mat3 {
        let dgj = dg[j];
        let dig = (Mat3::identity() * (2.0 * g.dot(&dgj)) - dgj * g.transpose() - g * dgj.transpose()) / m_s;
        dibar[j] - dig
    };

    let mut principal = Mat8::zeros();
    let mut perturbation = Mat8::zeros();
    let mut c_coupling = Mat8::zeros();

    // rows 0..3: (lambda 1 - I) omega
    let lam_minus_i = Mat3::identity() * x.lambda - inertia;
    for r in 0..3 {
        principal[(r, 0)] = x.omega[r];
        for cidx in 0..3 {
            principal[(r, 1 + cidx)] = lam_minus_i[(r, cidx)];
        }
    }
    // row 3: lambda^2 |omega|^2 - M0^2
    principal[(3, 0)] = 2.0 * x.lambda * x.omega.norm_squared();
    for cidx in 0..3 {
        principal[(3, 1 + cidx)] = 2.0 * x.lambda * x.lambda * x.omega[cidx];
    }
    // rows 4..7: m_S xi - g x omega; d/domega (-g x omega) = -skew(g)
    let sg = skew(&g);
    for r in 0..3 {
        for cidx in 0..3 {
            principal[(4 + r, 1 + cidx)] = -sg[(r, cidx)];
        }
        principal[(4 + r, 4 + r)] = m_s;
    }
    principal[(7, 7)] = dm[6];

    for j in 0..6 {
        let col = 1 + j;
        let di_w = d_inertia(j) * x.omega;
        let dg_w = dg[j].cross(&x.omega);
        for r in 0..3 {
            perturbation[(r, col)] = -di_w[r];
            perturbation[(4 + r, col)] = -dg_w[r];
        }
        perturbation[(7, col)] = dm[j];
    }
    let di_w = d_inertia(6) * x.omega;
    let dg_w = dg[6].cross(&x.omega);
    for r in 0..3 {
        c_coupling[(r, 7)] = -di_w[r];
        c_coupling[(4 + r, 7)] = -dg_w[r];
    }
    Ok(JacobianParts { principal, perturbation, c_coupling })
}

/// Central finite-difference Jacobian of [`assemble_f`], column by column.
pub fn finite_difference_jacobian(problem: &SteadyProblem, x: &SteadyUnknowns, rel_step: f64) -> Result<Mat8> {
    let base = x.to_vec();
    let mut jac = Mat8::zeros();
    for j in 0..8 {
        let h = rel_step * base[j].abs().max(1e-3 * base.amax().max(1e-12));
        let mut plus = base;
        let mut minus = base;
        plus[j] += h;
        minus[j] -= h;
        let fp = assemble_f(problem, &SteadyUnknowns::from_vec(&plus))?;
        let fm = assemble_f(problem, &SteadyUnknowns::from_vec(&minus))?;
        jac.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    Ok(jac)
}

/// One solution of the steady system together with its certificates.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyBranch {
    /// Eigenvalue of `I(rho_s)` belonging to `omega_s`; zero for the rest state.
    pub lambda: f64,
    pub omega: Vec3,
    pub xi: Vec3,
    pub c: f64,
    pub rho: Vec<f64>,
    /// Index (ascending order) of the seeding eigenvalue of `I(rho_bar)`.
    pub eigen_index: Option<usize>,
    pub newton_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Smallest singular value of the full Jacobian.
    pub sigma_min: f64,
    /// `sigma_max / sigma_min` of the full Jacobian.
    pub jacobian_condition: f64,
}

impl SteadyBranch {
    pub fn unknowns(&self) -> SteadyUnknowns {
        SteadyUnknowns { lambda: self.lambda, omega: self.omega, xi: self.xi, c: self.c }
    }

    /// Same physical branch with `(omega, xi)` negated.
    pub fn mirrored(&self) -> Self {
        Self { omega: -self.omega, xi: -self.xi, ..self.clone() }
    }

    pub fn is_rest(&self) -> bool {
        self.eigen_index.is_none()
    }
}

/// Pointwise checks of a branch against the defining relations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BranchInvariants {
    /// `|I omega - lambda omega|`.
    pub eigen_residual: f64,
    /// `| |I omega| - M0 |`.
    pub momentum_error: f64,
    /// `|int rho - m_F|`.
    pub mass_error: f64,
    /// `|m_S xi - g x omega|`.
    pub translation_error: f64,
    /// Angle between `omega` and `I omega` (radians).
    pub axis_angle: f64,
    pub rho_min: f64,
    pub rho_max: f64,
    /// Whether every density lies in `(rho_bar / 2, 3 rho_bar / 2)`.
    pub density_in_band: bool,
}

pub fn check_invariants(problem: &SteadyProblem, branch: &SteadyBranch) -> BranchInvariants {
    let props = profile_properties(problem, &branch.rho);
    let iw = props.inertia_total * branch.omega;
    let axis_angle = if branch.omega.norm() == 0.0 { 0.0 } else { angle_between(&branch.omega, &iw) };
    let rho_min = branch.rho.iter().copied().fold(f64::INFINITY, f64::min);
    let rho_max = branch.rho.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = problem.mean_density();
    BranchInvariants {
        eigen_residual: (iw - branch.omega * branch.lambda).norm(),
        momentum_error: (iw.norm() - problem.m0).abs(),
        mass_error: (props.fluid_mass - problem.fluid_mass).abs(),
        translation_error: (branch.xi * problem.system_mass() - props.first_moment.cross(&branch.omega)).norm(),
        axis_angle,
        rho_min,
        rho_max,
        density_in_band: rho_min > 0.5 * mean && rho_max < 1.5 * mean,
    }
}

/// Angle between two nonzero vectors, accurate for nearly parallel inputs.
pub fn angle_between(a: &Vec3, b: &Vec3) -> f64 {
    a.cross(b).norm().atan2(a.dot(b))
}

/// Inertia tensor at the mean density `m_F / |C|` and its eigen decomposition.
pub fn mean_density_inertia(problem: &SteadyProblem) -> Result<(MassProperties, SymEigen)> {
    let rho = vec![problem.mean_density(); problem.geometry.n_cells()];
    let props = compute_mass_properties(problem.geometry, &rho)?;
    Ok((props, sym_eigen(&props.inertia_total)))
}

/// The rest state `omega = xi = 0`, `rho = m_F / |C|`.
pub fn rest_branch(problem: &SteadyProblem) -> Result<SteadyBranch> {
    let c = problem.mean_density().powf(problem.constants.gamma - 1.0);
    let x = SteadyUnknowns { lambda: 0.0, omega: Vec3::zeros(), xi: Vec3::zeros(), c };
    let rho = vec![problem.mean_density(); problem.geometry.n_cells()];
    let residual = residual_from_profile(problem, &x, &rho).amax();
    Ok(SteadyBranch {
        lambda: 0.0,
        omega: Vec3::zeros(),
        xi: Vec3::zeros(),
        c,
        rho,
        eigen_index: None,
        newton_residual: residual,
        iterations: 0,
        converged: true,
        sigma_min: f64::NAN,
        jacobian_condition: f64::NAN,
    })
}

/// Starting point for the branch through eigenpair `(lambda_bar, r_bar)` of `I(rho_bar)`.
pub fn initial_guess(problem: &SteadyProblem, props: &MassProperties, lambda: f64, axis: &Vec3) -> Result<SteadyUnknowns> {
    let omega = axis * (problem.m0 / lambda);
    let xi = props.first_moment.cross(&omega) / problem.system_mass();
    let c = mass_closure(problem.geometry, problem.constants, &omega, &xi, problem.fluid_mass)?;
    Ok(SteadyUnknowns { lambda, omega, xi, c })
}

/// Damped Newton on `(lambda, omega, xi)` with `c` eliminated by the mass closure.
pub fn solve_branch(problem: &SteadyProblem, guess: &SteadyUnknowns, eigen_index: Option<usize>) -> Result<SteadyBranch> {
    let closure = |x: &SteadyUnknowns| -> Result<SteadyUnknowns> {
        let c = mass_closure(problem.geometry, problem.constants, &x.omega, &x.xi, problem.fluid_mass)?;
        Ok(SteadyUnknowns { c, ..*x })
    };
    let mut x = closure(guess)?;
    let mut f = assemble_f(problem, &x)?;
    let mut iterations = 0;
    while f.amax() > NEWTON_TOL && iterations < NEWTON_MAX_ITER {
        iterations += 1;
        let jac = assemble_grad_f(problem, &x)?.full();
        // Schur complement eliminating c (last row/column)
        let mut reduced = SMatrix::<f64, 7, 7>::zeros();
        let pivot = jac[(7, 7)];
        for r in 0..7 {
            for col in 0..7 {
                reduced[(r, col)] = jac[(r, col)] - jac[(r, 7)] * jac[(7, col)] / pivot;
            }
        }
        let rhs = SVector::<f64, 7>::from_fn(|r, _| -(f[r] - jac[(r, 7)] * f[7] / pivot));
        let Some(delta) = reduced.lu().solve(&rhs) else { break };

        let base = x.to_vec();
        let norm0 = f.norm();
        let mut t = 1.0;
        let mut accepted = None;
        while t >= MIN_DAMPING {
            let mut trial = base;
            for r in 0..7 {
                trial[r] += t * delta[r];
            }
            if let Ok(candidate) = closure(&SteadyUnknowns::from_vec(&trial)) {
                if let Ok(fc) = assemble_f(problem, &candidate) {
                    if fc.norm() < norm0 || fc.amax() <= NEWTON_TOL {
                        accepted = Some((candidate, fc));
                        break;
                    }
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((candidate, fc)) => {
                x = candidate;
                f = fc;
            }
            None => break,
        }
    }

    let rho = density_profile(problem.geometry, problem.constants, &x.omega, &x.xi, x.c)?;
    let jac = assemble_grad_f(problem, &x)?.full();
    let sv = jac.singular_values();
    let smax = sv.max();
    let smin = sv.min();
    Ok(SteadyBranch {
        lambda: x.lambda,
        omega: x.omega,
        xi: x.xi,
        c: x.c,
        rho,
        eigen_index,
        newton_residual: f.amax(),
        iterations,
        converged: f.amax() <= NEWTON_TOL,
        sigma_min: smin,
        jacobian_condition: smax / smin,
    })
}

/// All steady branches for the configuration.
///
/// `M0 = 0` returns the single rest state. Otherwise one branch per
/// eigenvalue of `I(rho_bar)`, each seeded along its eigenvector; `(omega, xi)`
/// and `(-omega, -xi)` are the same physical branch and only one is returned.
pub fn enumerate_branches(problem: &SteadyProblem) -> Result<Vec<SteadyBranch>> {
    if problem.m0 == 0.0 {
        return Ok(vec![rest_branch(problem)?]);
    }
    let (props, eig) = mean_density_inertia(problem)?;
    if eig.is_degenerate() {
        return Err(Error::DegenerateEigenvalues { gap: eig.min_relative_gap() });
    }
    (0..3)
        .map(|i| {
            let guess = initial_guess(problem, &props, eig.values[i], &eig.vector(i))?;
            solve_branch(problem, &guess, Some(i))
        })
        .collect()
}

/// `P = [[omega, lambda 1 - I], [2 lambda |omega|^2, 2 lambda^2 omega^T]]`.
pub fn reduced_matrix(lambda: f64, omega: &Vec3, inertia: &Mat3) -> Matrix4<f64> {
    let mut p = Matrix4::zeros();
    let lm = Mat3::identity() * lambda - inertia;
    for r in 0..3 {
        p[(r, 0)] = omega[r];
        for c in 0..3 {
            p[(r, 1 + c)] = lm[(r, c)];
        }
    }
    p[(3, 0)] = 2.0 * lambda * omega.norm_squared();
    for c in 0..3 {
        p[(3, 1 + c)] = 2.0 * lambda * lambda * omega[c];
    }
    p
}

fn embed(s: f64, v: &Vec3) -> Vector4<f64> {
    Vector4::new(s, v.x, v.y, v.z)
}

fn stacked(v: &Vec3, s: f64) -> Vector4<f64> {
    Vector4::new(v.x, v.y, v.z, s)
}

/// Isolation certificate for a converged branch.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedMatrixReport {
    pub p: Matrix4<f64>,
    /// Eigenvalues of `I(rho_s)` other than `lambda_s`.
    pub other_eigenvalues: [f64; 2],
    /// Residuals of `P (0, r_k) = (lambda_s - lambda_k)(r_k, 0)` for `k = 2, 3`.
    pub transverse_residuals: [f64; 2],
    /// Residual of `P (0, r_1) = (0, 2 lambda_s^2 |r_1|^2)`.
    pub axial_residual: f64,
    /// Residual of `P (1, 0) = (r_1, 2 lambda_s |r_1|^2)`.
    pub lambda_column_residual: f64,
    pub sigma_min_p: f64,
    /// Smallest singular value of the full Jacobian.
    pub sigma_min_jacobian: f64,
    /// Operator 2-norm of the perturbation block.
    pub perturbation_norm: f64,
}

pub fn reduced_matrix_check(problem: &SteadyProblem, branch: &SteadyBranch) -> Result<ReducedMatrixReport> {
    let props = profile_properties(problem, &branch.rho);
    let inertia = props.inertia_total;
    let p = reduced_matrix(branch.lambda, &branch.omega, &inertia);
    let eig = sym_eigen(&inertia);
    let r1 = branch.omega;
    // eigenvectors of I other than the rotation axis
    let mut others: Vec<usize> = (0..3).collect();
    others.sort_by(|&a, &b| {
        let da = (eig.values[a] - branch.lambda).abs();
        let db = (eig.values[b] - branch.lambda).abs();
        db.total_cmp(&da)
    });
    let others = [others[0], others[1]];
    let scale = p.amax().max(f64::MIN_POSITIVE);

    let transverse = others.map(|i| {
        let r = eig.vector(i);
        let lhs = p * embed(0.0, &r);
        let rhs = stacked(&r, 0.0) * (branch.lambda - eig.values[i]);
        (lhs - rhs).amax() / scale
    });
    let axial = {
        let lhs = p * embed(0.0, &r1);
        let rhs = Vector4::new(0.0, 0.0, 0.0, 2.0 * branch.lambda * branch.lambda * r1.norm_squared());
        (lhs - rhs).amax() / scale
    };
    let lambda_col = {
        let lhs = p * Vector4::new(1.0, 0.0, 0.0, 0.0);
        let rhs = stacked(&r1, 2.0 * branch.lambda * r1.norm_squared());
        (lhs - rhs).amax() / scale
    };
    let parts = assemble_grad_f(problem, &branch.unknowns())?;
    Ok(ReducedMatrixReport {
        p,
        other_eigenvalues: others.map(|i| eig.values[i]),
        transverse_residuals: transverse,
        axial_residual: axial,
        lambda_column_residual: lambda_col,
        sigma_min_p: p.singular_values().min(),
        sigma_min_jacobian: parts.full().singular_values().min(),
        perturbation_norm: parts.perturbation.singular_values().max(),
    })
}

/// Inertia tensor difference `|I(rho_bar) - I(rho_s)|` (spectral norm).
pub fn inertia_shift(problem: &SteadyProblem, branch: &SteadyBranch) -> Result<f64> {
    let (mean_props, _) = mean_density_inertia(problem)?;
    let props = profile_properties(problem, &branch.rho);
    Ok((mean_props.inertia_total - props.inertia_total).singular_values().max())
}

/// One row of a sweep over the pressure coefficient.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ScanRow {
    pub a: f64,
    pub branch: usize,
    pub lambda: f64,
    pub omega_norm: f64,
    pub newton_residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Operator norm of the perturbation block of the Jacobian.
    pub perturbation_norm: f64,
    /// `|I(rho_bar) - I(rho_s)|`.
    pub inertia_shift: f64,
    pub sigma_min: f64,
}

/// Enumerate branches for each value of `a`, other constants fixed.
pub fn scan_pressure_coefficient(
    geometry: &Geometry,
    constants: &PhysicalConstants,
    m0: f64,
    fluid_mass: f64,
    a_values: &[f64],
) -> Result<Vec<ScanRow>> {
    let mut rows = Vec::new();
    for &a in a_values {
        let c = PhysicalConstants { a, ..*constants };
        c.validate()?;
        let problem = SteadyProblem { geometry, constants: &c, m0, fluid_mass };
        for (i, b) in enumerate_branches(&problem)?.iter().enumerate() {
            let (perturbation_norm, sigma_min) = if b.is_rest() {
                (0.0, f64::NAN)
            } else {
                let rep = reduced_matrix_check(&problem, b)?;
                (rep.perturbation_norm, rep.sigma_min_jacobian)
            };
            rows.push(ScanRow {
                a,
                branch: b.eigen_index.unwrap_or(i),
                lambda: b.lambda,
                omega_norm: b.omega.norm(),
                newton_residual: b.newton_residual,
                iterations: b.iterations,
                converged: b.converged,
                perturbation_norm,
                inertia_shift: inertia_shift(&problem, b)?,
                sigma_min,
            });
        }
    }
    Ok(rows)
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evaluate, rigid_from_omega};
    use crate::fields::FluidState;

    fn geometry(dims: [usize; 3]) -> Geometry {
        Geometry::new(
            [0.3, 0.4, 0.5],
            Vec3::new(0.01, -0.02, 0.015),
            dims,
            2.0,
            Mat3::from_diagonal(&Vec3::new(0.02, 0.03, 0.04)),
        )
        .unwrap()
    }

    #[test]
    fn density_profile_example() {
        let g = geometry([4, 5, 6]);
        let c = PhysicalConstants::new(1.0, 2.0, 1.0, 0.0).unwrap();
        let rho = density_profile(&g, &c, &Vec3::z(), &Vec3::zeros(), 0.7).unwrap();
        for (r, x) in rho.iter().zip(g.centers()) {
            assert!((r - ((x.x * x.x + x.y * x.y) / 4.0 + 0.7)).abs() < 1e-15);
        }
    }

    #[test]
    fn density_profile_rejects_vacuum() {
        let g = geometry([4, 5, 6]);
        let c = PhysicalConstants::new(1.0, 2.0, 1.0, 0.0).unwrap();
        assert!(matches!(
            density_profile(&g, &c, &Vec3::z(), &Vec3::zeros(), -0.01),
            Err(Error::VacuumRegion { .. })
        ));
    }

    #[test]
    fn mass_closure_linear_case() {
        let g = geometry([6, 7, 8]);
        let c = PhysicalConstants::new(50.0, 2.0, 1.0, 0.0).unwrap();
        let omega = Vec3::new(0.1, -0.2, 0.3);
        let cc = mass_closure(&g, &c, &omega, &Vec3::zeros(), 0.06).unwrap();
        let avg = g.centers().iter().map(|x| omega.cross(x).norm_squared()).sum::<f64>() / g.n_cells() as f64;
        let expected = 0.06 / g.volume() - avg / (4.0 * 50.0);
        assert!((cc - expected).abs() < 1e-14);
    }

    #[test]
    fn mass_closure_hits_target() {
        let g = geometry([6, 7, 8]);
        let c = PhysicalConstants::new(3.0, 1.4, 1.0, 0.0).unwrap();
        let omega = Vec3::new(1.0, -2.0, 3.0);
        let xi = Vec3::new(0.01, 0.02, -0.01);
        let cc = mass_closure(&g, &c, &omega, &xi, 0.05).unwrap();
        let rho = density_profile(&g, &c, &omega, &xi, cc).unwrap();
        assert!((g.integrate(&rho) - 0.05).abs() < 1e-15);
    }

    #[test]
    fn mass_closure_reports_vacuum() {
        let g = geometry([6, 7, 8]);
        let c = PhysicalConstants::new(1e-3, 1.4, 1.0, 0.0).unwrap();
        let r = mass_closure(&g, &c, &Vec3::new(0.0, 0.0, 30.0), &Vec3::zeros(), 1e-6);
        assert!(matches!(r, Err(Error::VacuumRegion { .. })), "{r:?}");
    }

    fn problem<'a>(g: &'a Geometry, c: &'a PhysicalConstants) -> SteadyProblem<'a> {
        SteadyProblem { geometry: g, constants: c, m0: 0.01, fluid_mass: 0.06 }
    }

    #[test]
    fn jacobian_matches_finite_differences() {
        let g = geometry([6, 7, 8]);
        let c = PhysicalConstants::new(5.0, 1.4, 1.0, 0.0).unwrap();
        let p = problem(&g, &c);
        let x = SteadyUnknowns {
            lambda: 0.03,
            omega: Vec3::new(0.3, -0.5, 0.8),
            xi: Vec3::new(0.01, -0.02, 0.005),
            c: 0.9,
        };
        let exact = assemble_grad_f(&p, &x).unwrap().full();
        let fd = finite_difference_jacobian(&p, &x, 1e-5).unwrap();
        let err = (exact - fd).amax() / exact.amax();
        assert!(err < 1e-8, "{err:e}");
    }

    #[test]
    fn branches_converge_and_satisfy_invariants() {
        let g = geometry([8, 8, 8]);
        let c = PhysicalConstants::new(100.0, 1.4, 1.0, 0.0).unwrap();
        let p = problem(&g, &c);
        let branches = enumerate_branches(&p).unwrap();
        assert_eq!(branches.len(), 3);
        for b in &branches {
            assert!(b.converged, "residual {:e}", b.newton_residual);
            let inv = check_invariants(&p, b);
            assert!(inv.eigen_residual < 1e-12);
            assert!(inv.momentum_error < 1e-12);
            assert!(inv.mass_error < 1e-14);
            assert!(inv.translation_error < 1e-12);
            assert!(inv.axis_angle < 1e-9);
            assert!(inv.density_in_band);
            let rep = reduced_matrix_check(&p, b).unwrap();
            assert!(rep.transverse_residuals.iter().all(|r| *r < 1e-10));
            assert!(rep.axial_residual < 1e-10 && rep.lambda_column_residual < 1e-12);
            assert!(rep.sigma_min_jacobian > 0.0);
        }
    }

    #[test]
    fn mirrored_guess_gives_mirrored_branch() {
        let g = geometry([6, 6, 6]);
        let c = PhysicalConstants::new(100.0, 1.4, 1.0, 0.0).unwrap();
        let p = problem(&g, &c);
        let (props, eig) = mean_density_inertia(&p).unwrap();
        let plus = solve_branch(&p, &initial_guess(&p, &props, eig.values[2], &eig.vector(2)).unwrap(), Some(2)).unwrap();
        let minus =
            solve_branch(&p, &initial_guess(&p, &props, eig.values[2], &-eig.vector(2)).unwrap(), Some(2)).unwrap();
        assert!((plus.omega + minus.omega).norm() < 1e-12);
        assert!((plus.xi + minus.xi).norm() < 1e-12);
        assert!((plus.lambda - minus.lambda).abs() < 1e-14);
    }

    #[test]
    fn zero_momentum_gives_rest_state() {
        let g = geometry([5, 5, 5]);
        let c = PhysicalConstants::new(10.0, 1.4, 1.0, 0.0).unwrap();
        let p = SteadyProblem { m0: 0.0, ..problem(&g, &c) };
        let b = enumerate_branches(&p).unwrap();
        assert_eq!(b.len(), 1);
        assert!(b[0].is_rest());
        assert!(b[0].rho.iter().all(|r| (r - 0.06 / g.volume()).abs() < 1e-14));
    }

    #[test]
    fn symmetric_cube_is_degenerate() {
        let g = Geometry::new([0.4; 3], Vec3::zeros(), [6, 6, 6], 1.0, Mat3::identity() * 0.03).unwrap();
        let c = PhysicalConstants::new(10.0, 1.4, 1.0, 0.0).unwrap();
        let p = SteadyProblem { geometry: &g, constants: &c, m0: 0.01, fluid_mass: 0.064 };
        assert!(matches!(enumerate_branches(&p), Err(Error::DegenerateEigenvalues { .. })));
    }

    #[test]
    fn reduced_matrix_example() {
        let inertia = Mat3::from_diagonal(&Vec3::new(1.0, 2.0, 3.0));
        let p = reduced_matrix(1.0, &Vec3::x(), &inertia);
        let out = p * Vector4::new(0.0, 0.0, 1.0, 0.0);
        assert_eq!(out, Vector4::new(0.0, -1.0, 0.0, 0.0));
        let out = p * Vector4::new(0.0, 1.0, 0.0, 0.0);
        assert_eq!(out, Vector4::new(0.0, 0.0, 0.0, 2.0));
        let out = p * Vector4::new(1.0, 0.0, 0.0, 0.0);
        assert_eq!(out, Vector4::new(1.0, 0.0, 0.0, 2.0));
    }

    #[test]
    fn steady_branch_is_discrete_equilibrium() {
        let g = geometry([8, 8, 8]);
        let c = PhysicalConstants::new(10.0, 1.4, 0.05, 0.0).unwrap();
        let p = problem(&g, &c);
        for b in enumerate_branches(&p).unwrap() {
            let state = FluidState { rho: b.rho.clone(), v: vec![Vec3::zeros(); g.n_cells()] };
            let rigid = rigid_from_omega(&g, &state, b.omega);
            assert!((rigid.xi - b.xi).norm() < 1e-14);
            let t = evaluate(&g, &c, 0.01, &state, &rigid);
            // d(rho u)/dt and d(rho)/dt vanish in the body frame
            let max_m = t.momentum.iter().map(|m| m.amax()).fold(0.0, f64::max);
            let max_r = t.rho.iter().map(|r| r.abs()).fold(0.0, f64::max);
            assert!(max_m < 1e-11);
            assert!(max_r < 1e-12);
        }
    }
}
