//! Cell-centered fluid state in the body frame and the discrete calculus
//! used on it.
//!
//! Boundary closure: velocity ghosts are reflected (`v_ghost = -v`), which
//! puts `v = 0` on every wall face; scalar ghosts copy the adjacent cell
//! (zero normal gradient).

use crate::geometry::Geometry;
use crate::linalg::{Mat3, Vec3};

#[derive(Debug, Clone, PartialEq)]
pub struct FluidState {
    pub rho: Vec<f64>,
    /// Velocity relative to the rigid motion of the body.
    pub v: Vec<Vec3>,
}

impl FluidState {
    pub fn at_rest(geometry: &Geometry, rho: f64) -> Self {
        Self { rho: vec![rho; geometry.n_cells()], v: vec![Vec3::zeros(); geometry.n_cells()] }
    }

    pub fn n_cells(&self) -> usize {
        self.rho.len()
    }
}

/// Rigid variables in the body frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigidState {
    pub omega: Vec3,
    /// Velocity of the body center of mass.
    pub xi: Vec3,
    /// Total angular momentum about the body center of mass.
    pub angular_momentum: Vec3,
}

impl RigidState {
    pub fn at_rest() -> Self {
        Self { omega: Vec3::zeros(), xi: Vec3::zeros(), angular_momentum: Vec3::zeros() }
    }

    /// Rigid velocity `omega x x + xi` at a point.
    #[inline]
    pub fn rigid_velocity(&self, x: &Vec3) -> Vec3 {
        self.omega.cross(x) + self.xi
    }
}

/// `u = v + omega x x + xi` at a cell center.
pub fn total_velocity(geometry: &Geometry, state: &FluidState, rigid: &RigidState, cell: usize) -> Vec3 {
    state.v[cell] + rigid.rigid_velocity(&geometry.center(cell))
}

/// Neighbor lookups along one axis with the boundary closure applied.
#[derive(Clone, Copy)]
pub(crate) struct Axis {
    pub stride: usize,
    pub len: usize,
    pub h: f64,
}

impl Axis {
    pub fn all(geometry: &Geometry) -> [Axis; 3] {
        let dims = geometry.dims();
        let h = geometry.spacing();
        [0, 1, 2].map(|d| Axis { stride: geometry.stride(d), len: dims[d], h: h[d] })
    }

    /// Position of `idx` along this axis.
    #[inline]
    pub fn pos(&self, idx: usize) -> usize {
        (idx / self.stride) % self.len
    }
}

/// `(q_minus, q_plus)` with zero-gradient ghosts.
#[inline]
pub(crate) fn scalar_neighbors(q: &[f64], idx: usize, ax: &Axis) -> (f64, f64) {
    let p = ax.pos(idx);
    let lo = if p == 0 { q[idx] } else { q[idx - ax.stride] };
    let hi = if p + 1 == ax.len { q[idx] } else { q[idx + ax.stride] };
    (lo, hi)
}

/// `(v_minus, v_plus)` with reflected (no-slip) ghosts.
#[inline]
pub(crate) fn vector_neighbors(v: &[Vec3], idx: usize, ax: &Axis) -> (Vec3, Vec3) {
    let p = ax.pos(idx);
    let lo = if p == 0 { -v[idx] } else { v[idx - ax.stride] };
    let hi = if p + 1 == ax.len { -v[idx] } else { v[idx + ax.stride] };
    (lo, hi)
}

/// Central gradient of a scalar field, zero-gradient ghosts.
pub fn gradient(geometry: &Geometry, q: &[f64]) -> Vec<Vec3> {
    let axes = Axis::all(geometry);
    (0..q.len())
        .map(|idx| {
            let mut g = Vec3::zeros();
            for (d, ax) in axes.iter().enumerate() {
                let (lo, hi) = scalar_neighbors(q, idx, ax);
                g[d] = (hi - lo) / (2.0 * ax.h);
            }
            g
        })
        .collect()
}

/// Central velocity gradient `G[(a, b)] = d v_a / d x_b`, no-slip ghosts.
pub fn velocity_gradient(geometry: &Geometry, v: &[Vec3]) -> Vec<Mat3> {
    let axes = Axis::all(geometry);
    (0..v.len())
        .map(|idx| {
            let mut g = Mat3::zeros();
            for (b, ax) in axes.iter().enumerate() {
                let (lo, hi) = vector_neighbors(v, idx, ax);
                g.set_column(b, &((hi - lo) / (2.0 * ax.h)));
            }
            g
        })
        .collect()
}

pub fn divergence(geometry: &Geometry, v: &[Vec3]) -> Vec<f64> {
    let axes = Axis::all(geometry);
    (0..v.len())
        .map(|idx| {
            axes.iter()
                .enumerate()
                .map(|(d, ax)| {
                    let (lo, hi) = vector_neighbors(v, idx, ax);
                    (hi[d] - lo[d]) / (2.0 * ax.h)
                })
                .sum()
        })
        .collect()
}

/// Strain `D(v) = grad v + grad v^T`.
pub fn strain(geometry: &Geometry, v: &[Vec3]) -> Vec<Mat3> {
    velocity_gradient(geometry, v).into_iter().map(|g| g + g.transpose()).collect()
}

/// Whether the cell touches a wall.
pub fn is_boundary_cell(geometry: &Geometry, idx: usize) -> bool {
    let (i, j, k) = geometry.ijk(idx);
    let n = geometry.dims();
    i == 0 || j == 0 || k == 0 || i + 1 == n[0] || j + 1 == n[1] || k + 1 == n[2]
}
