//! Seeded smooth initial perturbations.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::fields::FluidState;
use crate::geometry::Geometry;
use crate::linalg::Vec3;

/// Mean density `rho_bar` plus smooth random perturbations.
///
/// The velocity is a random combination of the products
/// `sin(n1 pi s1) sin(n2 pi s2) sin(n3 pi s3)`, `n_d in {1, 2}`, with `s` the
/// position scaled to `[0, 1]` across the box, so it vanishes on the walls.
/// The density perturbation combines `cos(n pi s_d)`, `n in {1, 2}`, whose
/// cell averages vanish, so the fluid mass is `rho_bar |C|`. Both are scaled
/// so that `max |v| = v_amplitude` and `max |rho - rho_bar| = rho_amplitude rho_bar`.
pub fn perturbed_state(geometry: &Geometry, rho_bar: f64, v_amplitude: f64, rho_amplitude: f64, seed: u64) -> FluidState {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<[usize; 3]> =
        (0..8).map(|m| [1 + (m & 1), 1 + ((m >> 1) & 1), 1 + ((m >> 2) & 1)]).collect();
    let v_coef: Vec<Vec3> = modes
        .iter()
        .map(|_| Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let rho_coef: Vec<[f64; 2]> = (0..3).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();

    let pi = std::f64::consts::PI;
    let sides = geometry.sides();
    let offset = geometry.offset();
    let mut v = Vec::with_capacity(geometry.n_cells());
    let mut sigma = Vec::with_capacity(geometry.n_cells());
    for x in geometry.centers() {
        let s = [0, 1, 2].map(|d| (x[d] - offset[d]) / sides[d] + 0.5);
        let mut vel = Vec3::zeros();
        for (n, c) in modes.iter().zip(&v_coef) {
            vel += c * (0..3).map(|d| (n[d] as f64 * pi * s[d]).sin()).product::<f64>();
        }
        v.push(vel);
        let mut q = 0.0;
        for d in 0..3 {
            q += rho_coef[d][0] * (pi * s[d]).cos() + rho_coef[d][1] * (2.0 * pi * s[d]).cos();
        }
        sigma.push(q);
    }
    let vmax = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let smax = sigma.iter().map(|x| x.abs()).fold(0.0, f64::max);
    let vscale = if vmax > 0.0 { v_amplitude / vmax } else { 0.0 };
    let sscale = if smax > 0.0 { rho_amplitude / smax } else { 0.0 };
    FluidState {
        rho: sigma.iter().map(|q| rho_bar * (1.0 + sscale * q)).collect(),
        v: v.into_iter().map(|x| x * vscale).collect(),
    }
}
