//! Cavity/body geometry, cell quadrature, and density-dependent mass properties.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{inertia_kernel, Mat3, Vec3};

/// Axis-aligned box cavity inside a rigid body whose center of mass is the
/// frame origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Geometry {
    sides: [f64; 3],
    offset: Vec3,
    dims: [usize; 3],
    body_mass: f64,
    body_inertia: Mat3,
    spacing: [f64; 3],
    centers: Vec<Vec3>,
}

/// Plain description of a [`Geometry`], as found in configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    /// Box side lengths `[L1, L2, L3]`.
    pub sides: [f64; 3],
    /// Box center relative to the body center of mass.
    #[serde(default)]
    pub offset: [f64; 3],
    /// Cell counts `[N1, N2, N3]`.
    pub grid: [usize; 3],
    pub body_mass: f64,
    /// Body inertia about its center of mass: `[xx, yy, zz, xy, xz, yz]`.
    pub body_inertia: [f64; 6],
}

impl GeometrySpec {
    pub fn inertia_matrix(&self) -> Mat3 {
        let [xx, yy, zz, xy, xz, yz] = self.body_inertia;
        Mat3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz)
    }

    pub fn build(&self) -> Result<Geometry> {
        Geometry::new(
            self.sides,
            Vec3::from(self.offset),
            self.grid,
            self.body_mass,
            self.inertia_matrix(),
        )
    }
}

impl Geometry {
    pub fn new(
        sides: [f64; 3],
        offset: Vec3,
        dims: [usize; 3],
        body_mass: f64,
        body_inertia: Mat3,
    ) -> Result<Self> {
        let mut problems = Vec::new();
        if sides.iter().any(|&l| !(l > 0.0 && l.is_finite())) {
            problems.push(format!("box sides must be positive, got {sides:?}"));
        }
        if dims.iter().any(|&n| n < 3) {
            problems.push(format!("each grid dimension must be at least 3, got {dims:?}"));
        }
        if !(body_mass > 0.0 && body_mass.is_finite()) {
            problems.push(format!("body mass must be positive, got {body_mass}"));
        }
        if (body_inertia - body_inertia.transpose()).norm() > 0.0 {
            problems.push("body inertia must be symmetric".to_string());
        }
        if body_inertia.cholesky().is_none() {
            problems.push("body inertia must be positive definite".to_string());
        }
        if !offset.iter().all(|x| x.is_finite()) {
            problems.push("cavity offset must be finite".to_string());
        }
        if !problems.is_empty() {
            return Err(Error::Geometry(problems.join("; ")));
        }

        let spacing = [
            sides[0] / dims[0] as f64,
            sides[1] / dims[1] as f64,
            sides[2] / dims[2] as f64,
        ];
        let mut centers = Vec::with_capacity(dims[0] * dims[1] * dims[2]);
        for i in 0..dims[0] {
            for j in 0..dims[1] {
                for k in 0..dims[2] {
                    centers.push(Vec3::new(
                        offset.x - 0.5 * sides[0] + (i as f64 + 0.5) * spacing[0],
                        offset.y - 0.5 * sides[1] + (j as f64 + 0.5) * spacing[1],
                        offset.z - 0.5 * sides[2] + (k as f64 + 0.5) * spacing[2],
                    ));
                }
            }
        }
        Ok(Self { sides, offset, dims, body_mass, body_inertia, spacing, centers })
    }

    pub fn sides(&self) -> [f64; 3] {
        self.sides
    }

    pub fn offset(&self) -> Vec3 {
        self.offset
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn body_mass(&self) -> f64 {
        self.body_mass
    }

    pub fn body_inertia(&self) -> &Mat3 {
        &self.body_inertia
    }

    pub fn n_cells(&self) -> usize {
        self.centers.len()
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1] * self.spacing[2]
    }

    /// Exact cavity volume `L1 L2 L3`.
    pub fn volume(&self) -> f64 {
        self.sides[0] * self.sides[1] * self.sides[2]
    }

    /// Row-major linear index, last axis fastest.
    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.dims[1] + j) * self.dims[2] + k
    }

    #[inline]
    pub fn ijk(&self, idx: usize) -> (usize, usize, usize) {
        let k = idx % self.dims[2];
        let j = (idx / self.dims[2]) % self.dims[1];
        let i = idx / (self.dims[1] * self.dims[2]);
        (i, j, k)
    }

    /// Linear-index stride along axis `d`.
    #[inline]
    pub fn stride(&self, d: usize) -> usize {
        match d {
            0 => self.dims[1] * self.dims[2],
            1 => self.dims[2],
            _ => 1,
        }
    }

    #[inline]
    pub fn center(&self, idx: usize) -> Vec3 {
        self.centers[idx]
    }

    pub fn centers(&self) -> &[Vec3] {
        &self.centers
    }

    /// Same body and box at a different resolution.
    pub fn with_dims(&self, dims: [usize; 3]) -> Result<Self> {
        Self::new(self.sides, self.offset, dims, self.body_mass, self.body_inertia)
    }

    /// Midpoint-rule integral of a cell-constant field.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().sum::<f64>() * self.cell_volume()
    }

    pub(crate) fn check_positive(&self, rho: &[f64]) -> Result<()> {
        if let Some((idx, &value)) = rho.iter().enumerate().find(|(_, r)| !(**r > 0.0)) {
            let (i, j, k) = self.ijk(idx);
            return Err(Error::NonPositiveDensity { i, j, k, value });
        }
        Ok(())
    }
}

/// Mass properties of the coupled system for a given fluid density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassProperties {
    pub fluid_mass: f64,
    /// First moment `g = int rho x`.
    pub first_moment: Vec3,
    /// Fluid inertia about the frame origin.
    pub inertia_bar: Mat3,
    /// Steiner correction `(1|g|^2 - g (x) g) / m_S`.
    pub inertia_g: Mat3,
    /// Central inertia of body plus fluid, `I_C + I_bar - I_g`.
    pub inertia_total: Mat3,
    pub system_mass: f64,
}

impl MassProperties {
    /// Assembles the tensors from the raw integrals.
    pub fn from_integrals(
        geometry: &Geometry,
        fluid_mass: f64,
        first_moment: Vec3,
        inertia_bar: Mat3,
        system_mass: f64,
    ) -> Self {
        let inertia_g = inertia_kernel(&first_moment) / system_mass;
        let inertia_total = geometry.body_inertia() + inertia_bar - inertia_g;
        Self { fluid_mass, first_moment, inertia_bar, inertia_g, inertia_total, system_mass }
    }
}

pub fn compute_mass_properties(geometry: &Geometry, rho: &[f64]) -> Result<MassProperties> {
    geometry.check_positive(rho)?;
    let (mass, g, ibar) = raw_moments(geometry, rho);
    Ok(MassProperties::from_integrals(geometry, mass, g, ibar, geometry.body_mass() + mass))
}

/// `(int rho, int rho x, int rho (1|x|^2 - x (x) x))`, summed in cell order.
pub(crate) fn raw_moments(geometry: &Geometry, rho: &[f64]) -> (f64, Vec3, Mat3) {
    let mut mass = 0.0;
    let mut g = Vec3::zeros();
    let mut ibar = Mat3::zeros();
    for (r, x) in rho.iter().zip(geometry.centers()) {
        mass += r;
        g += x * *r;
        ibar += inertia_kernel(x) * *r;
    }
    let vol = geometry.cell_volume();
    (mass * vol, g * vol, ibar * vol)
}

/// Center of mass of the coupled system in the body frame.
pub fn center_of_mass(props: &MassProperties) -> Vec3 {
    props.first_moment / props.system_mass
}

/// Inertia of body plus fluid assembled directly about the system center of mass.
pub fn central_inertia_direct(geometry: &Geometry, rho: &[f64]) -> Result<Mat3> {
    let props = compute_mass_properties(geometry, rho)?;
    let xg = center_of_mass(&props);
    let mut fluid = Mat3::zeros();
    for (r, x) in rho.iter().zip(geometry.centers()) {
        fluid += inertia_kernel(&(x - xg)) * *r;
    }
    fluid *= geometry.cell_volume();
    Ok(geometry.body_inertia() + inertia_kernel(&xg) * geometry.body_mass() + fluid)
}
