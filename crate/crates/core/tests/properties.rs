use proptest::prelude::*;

use cavity_core::checkpoint::Checkpoint;
use cavity_core::dynamics::{
    closure_from_momentum, continuity_rhs, evaluate, rigid_from_angular_momentum, DEFAULT_FILTER,
};
use cavity_core::fields::{FluidState, RigidState};
use cavity_core::geometry::{central_inertia_direct, compute_mass_properties, Geometry};
use cavity_core::initial::perturbed_state;
use cavity_core::linalg::{skew, sym_eigen, Mat3, Vec3};
use cavity_core::physics::PhysicalConstants;
use cavity_core::steady::{density_profile, mass_closure};
use nalgebra::UnitQuaternion;

fn geometry(dims: [usize; 3], offset: Vec3) -> Geometry {
    Geometry::new([0.3, 0.4, 0.5], offset, dims, 1.5, Mat3::from_diagonal(&Vec3::new(0.02, 0.03, 0.04))).unwrap()
}

fn vec3(range: f64) -> impl Strategy<Value = Vec3> {
    (-range..range, -range..range, -range..range).prop_map(|(x, y, z)| Vec3::new(x, y, z))
}

/// Positive density from a handful of smooth modes.
fn density_field() -> impl Strategy<Value = (Vec<f64>, Vec3)> {
    (prop::collection::vec(-1.0f64..1.0, 9), vec3(0.05)).prop_map(|(k, offset)| (k, offset))
}

fn build_density(g: &Geometry, k: &[f64]) -> Vec<f64> {
    g.centers()
        .iter()
        .map(|x| {
            let q: f64 = (0..3).map(|d| k[3 * d] * (7.0 * x[d]).sin() + k[3 * d + 1] * (4.0 * x[d]).cos() + k[3 * d + 2] * x[d]).sum();
            1.0 + 0.3 * q.tanh()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 100, ..ProptestConfig::default() })]

    #[test]
    fn inertia_is_symmetric_positive_definite((k, offset) in density_field()) {
        let g = geometry([6, 7, 8], offset);
        let rho = build_density(&g, &k);
        let p = compute_mass_properties(&g, &rho).unwrap();
        let i = p.inertia_total;
        prop_assert!((i - i.transpose()).amax() <= 1e-14 * i.amax());
        prop_assert!(sym_eigen(&i).values[0] > 0.0);
    }

    #[test]
    fn lagrange_inequality((k, offset) in density_field(), a in vec3(1.0)) {
        let g = geometry([6, 7, 8], offset);
        let p = compute_mass_properties(&g, &build_density(&g, &k)).unwrap();
        let lhs = a.dot(&(p.inertia_g * a));
        let rhs = p.fluid_mass / p.system_mass * a.dot(&(p.inertia_bar * a));
        prop_assert!(lhs <= rhs * (1.0 + 1e-14) + 1e-18);
    }

    #[test]
    fn steiner_consistency((k, offset) in density_field()) {
        let g = geometry([6, 7, 8], offset);
        let rho = build_density(&g, &k);
        let p = compute_mass_properties(&g, &rho).unwrap();
        let direct = central_inertia_direct(&g, &rho).unwrap();
        prop_assert!((direct - p.inertia_total).amax() <= 1e-10 * p.inertia_total.amax());
    }

    #[test]
    fn continuity_is_conservative(seed in any::<u64>(), amp in 0.0f64..0.3) {
        let g = geometry([5, 6, 7], Vec3::zeros());
        let s = perturbed_state(&g, 1.0, amp, amp, seed);
        let total: f64 = continuity_rhs(&g, &s).iter().sum();
        prop_assert!(total.abs() * g.cell_volume() < 1e-14);
    }

    #[test]
    fn dissipation_is_non_negative(seed in any::<u64>(), mu in 1e-3f64..1.0, lambda in 0.0f64..1.0, filter in 0.0f64..0.2) {
        let g = geometry([5, 6, 7], Vec3::new(0.01, 0.0, -0.02));
        let c = PhysicalConstants::new(10.0, 1.4, mu, lambda).unwrap();
        let s = perturbed_state(&g, 1.0, 0.1, 0.1, seed);
        let t = evaluate(&g, &c, filter, &s, &RigidState::at_rest());
        prop_assert!(t.viscous_dissipation >= 0.0);
        prop_assert!(t.filter_dissipation >= 0.0);
    }

    #[test]
    fn closure_routes_agree(seed in any::<u64>(), m in vec3(0.05)) {
        let g = geometry([5, 6, 7], Vec3::new(0.02, -0.01, 0.0));
        let s = perturbed_state(&g, 1.0, 0.05, 0.05, seed);
        let rigid = rigid_from_angular_momentum(&g, &s, m).unwrap();
        let momentum: Vec<Vec3> = s.rho.iter().zip(&s.v).zip(g.centers())
            .map(|((r, v), x)| (v + rigid.rigid_velocity(x)) * *r)
            .collect();
        let (omega, xi) = closure_from_momentum(&g, &momentum, &m);
        prop_assert!((omega - rigid.omega).norm() <= 1e-11 * (1.0 + rigid.omega.norm()));
        prop_assert!((xi - rigid.xi).norm() <= 1e-12 * (1.0 + rigid.xi.norm()));
    }

    #[test]
    fn rigid_velocity_gradient_is_stress_free(w in vec3(5.0), mu in 1e-3f64..2.0, lambda in 0.0f64..2.0) {
        let c = PhysicalConstants::new(1.0, 1.4, mu, lambda).unwrap();
        prop_assert!(c.viscous_stress(&skew(&w)).amax() <= 1e-15 * (1.0 + w.norm()) * (mu + lambda + 1.0));
    }

    #[test]
    fn mass_closure_meets_target(w in vec3(3.0), xi in vec3(0.05), gamma in 1.1f64..3.0, a in 1.0f64..1e3) {
        let g = geometry([5, 6, 7], Vec3::new(0.01, 0.0, 0.0));
        let c = PhysicalConstants::new(a, gamma, 1.0, 0.0).unwrap();
        let target = 0.06;
        if let Ok(cc) = mass_closure(&g, &c, &w, &xi, target) {
            let rho = density_profile(&g, &c, &w, &xi, cc).unwrap();
            prop_assert!(rho.iter().all(|r| *r > 0.0));
            prop_assert!((g.integrate(&rho) - target).abs() <= 1e-12 * target);
        }
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(
        dims in (1usize..4, 1usize..4, 1usize..4),
        values in prop::collection::vec(any::<f64>(), 4 * 27),
        header in prop::collection::vec(any::<f64>(), 12),
        step in any::<u64>(),
        angles in vec3(3.0),
    ) {
        let n = dims.0 * dims.1 * dims.2;
        let ckpt = Checkpoint {
            dims: [dims.0, dims.1, dims.2],
            step,
            time: header[0],
            fluid: FluidState {
                rho: values[..n].to_vec(),
                v: (0..n).map(|i| Vec3::new(values[n + 3 * i], values[n + 3 * i + 1], values[n + 3 * i + 2])).collect(),
            },
            rigid: RigidState {
                omega: Vec3::new(header[1], header[2], header[3]),
                xi: Vec3::new(header[4], header[5], header[6]),
                angular_momentum: Vec3::new(header[7], header[8], header[9]),
            },
            orientation: UnitQuaternion::from_euler_angles(angles.x, angles.y, angles.z),
            last_omega: (step % 2 == 0).then(|| Vec3::new(header[1], header[2], header[3])),
            energy0: header[10],
            dissipated: header[11],
        };
        let mut a = Vec::new();
        ckpt.write_to(&mut a).unwrap();
        let back = Checkpoint::read_from(a.as_slice()).unwrap();
        let mut b = Vec::new();
        back.write_to(&mut b).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn steady_states_are_unaffected_by_filter() {
    // filter flux vanishes when h - Phi is constant
    let g = geometry([6, 6, 6], Vec3::new(0.01, 0.02, 0.0));
    let c = PhysicalConstants::new(20.0, 1.4, 0.1, 0.0).unwrap();
    let omega = Vec3::new(0.2, -0.4, 1.0);
    let xi = Vec3::zeros();
    let cc = mass_closure(&g, &c, &omega, &xi, 0.06).unwrap();
    let rho = density_profile(&g, &c, &omega, &xi, cc).unwrap();
    let s = FluidState { rho, v: vec![Vec3::zeros(); g.n_cells()] };
    let rigid = RigidState { omega, xi, angular_momentum: Vec3::zeros() };
    let t = evaluate(&g, &c, DEFAULT_FILTER, &s, &rigid);
    assert!(t.filter_dissipation < 1e-24);
}
