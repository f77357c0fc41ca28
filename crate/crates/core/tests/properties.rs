//! Randomized invariants.

use ebt_core::constants::exponents;
use ebt_core::diagnostics::dyadic_level_sums;
use ebt_core::energy::{energy, EnergyParams};
use ebt_core::grid::{curl_apply, divergence};
use ebt_core::io::{
    btf_from_bytes, btf_to_bytes, graph_text, measure_text, parse_graph, parse_measure, Field,
};
use ebt_core::measures::{graph_divergence, smooth_onto_grid, AtomicMeasure, Edge, WeightedGraph};
use ebt_core::profile::solve_profile;
use ebt_core::w1::w1_distance;
use ebt_core::{GridSpec, NodeField2D, VectorField2D};
use proptest::prelude::*;

fn point() -> impl Strategy<Value = [f64; 2]> {
    (0.0..1.0f64, 0.0..1.0f64).prop_map(|(x, y)| [x, y])
}

/// Probability measure with 1 to 5 atoms in the unit square.
fn probability() -> impl Strategy<Value = AtomicMeasure> {
    prop::collection::vec((point(), 0.05..1.0f64), 1..=5).prop_map(|mut atoms| {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        atoms.iter_mut().for_each(|a| a.1 /= total);
        AtomicMeasure::new(atoms).unwrap()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn exponents_are_consistent(alpha in 0.5001..0.9999f64) {
        let x = exponents(alpha, 2).unwrap();
        prop_assert!(x.beta > 0.0 && x.beta < 1.0);
        prop_assert!((x.amplitude_exponent() - (alpha + 1.0) / 3.0).abs() < 1e-14);
        prop_assert!((x.gamma2 - x.gamma1 - 2.0).abs() < 1e-14);
    }

    #[test]
    fn profile_carries_its_flux(alpha in 0.55..0.95f64, theta in 0.05..5.0f64, eps in 1e-3..0.1f64) {
        let p = solve_profile(alpha, theta, eps, 128).unwrap();
        prop_assert!((p.total_flux() - theta).abs() <= 1e-6 * theta);
        let w = p.support_halfwidth;
        let mut last = p.flux_below(-w);
        for k in 1..=50 {
            let y = -w + 2.0 * w * k as f64 / 50.0;
            let f = p.flux_below(y);
            prop_assert!(f >= last - 1e-14);
            prop_assert!((f + p.flux_below(-y)).abs() < 1e-12 * theta.max(1.0));
            last = f;
        }
        prop_assert_eq!(p.intensity(1.01 * w), 0.0);
    }

    #[test]
    fn w1_is_a_metric(a in probability(), b in probability(), c in probability()) {
        let ab = w1_distance(&a, &b).unwrap();
        prop_assert!(ab >= 0.0);
        prop_assert!((ab - w1_distance(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!(w1_distance(&a, &a).unwrap().abs() < 1e-12);
        let ac = w1_distance(&a, &c).unwrap();
        let bc = w1_distance(&b, &c).unwrap();
        prop_assert!(ac <= ab + bc + 1e-12);
    }

    #[test]
    fn w1_moves_with_translations(a in probability(), dx in -0.5..0.5f64) {
        let shifted = AtomicMeasure::new(a.atoms.iter().map(|(p, m)| ([p[0] + dx, p[1]], *m)).collect()).unwrap();
        prop_assert!((w1_distance(&a, &shifted).unwrap() - dx.abs()).abs() < 1e-12);
    }

    #[test]
    fn curl_fields_are_divergence_free(seed in any::<u64>()) {
        let g = GridSpec::from_bounds(12, 9, [0.0, 0.0], [1.2, 0.9]).unwrap();
        let mut s = seed;
        let mut psi = NodeField2D::from_fn(g, |_| {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        });
        psi.clear_boundary();
        let u = curl_apply(&psi).unwrap();
        prop_assert!(divergence(&u).max_abs() < 1e-12);
    }

    #[test]
    fn energy_is_nonnegative_and_even(ux in -2.0..2.0f64, uy in -2.0..2.0f64, k in 1.0..6.0f64) {
        let g = GridSpec::from_bounds(8, 8, [0.0, 0.0], [1.0, 1.0]).unwrap();
        let u = VectorField2D::from_fn(g, |p| [ux * (k * p[1]).sin(), uy * (k * p[0]).cos()]);
        let p = EnergyParams::new(0.8, 0.05, 0.0).unwrap();
        let e = energy(&u, &p).total;
        prop_assert!(e >= 0.0);
        prop_assert!((energy(&u.scaled(-1.0), &p).total - e).abs() <= 1e-12 * e.max(1.0));
    }

    #[test]
    fn dyadic_sums_are_monotone(atoms in prop::collection::vec((0.0..1.0f64, -1.0..1.0f64), 1..20), alpha in 0.5..1.0f64) {
        let sums = dyadic_level_sums(&atoms, alpha, 24).unwrap();
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        prop_assert!((sums[0] - total.abs().powf(alpha)).abs() < 1e-12);
        for w in sums.windows(2) {
            prop_assert!(w[1] >= w[0] * (1.0 - 1e-13));
        }
    }

    #[test]
    fn graph_divergence_is_balanced(edges in prop::collection::vec((point(), point(), 0.1..2.0f64), 1..5)) {
        let edges: Vec<Edge> = edges
            .into_iter()
            .filter(|(a, b, _)| (a[0] - b[0]).hypot(a[1] - b[1]) > 1e-3)
            .map(|(p0, p1, weight)| Edge { p0, p1, weight })
            .collect();
        prop_assume!(!edges.is_empty());
        let g = WeightedGraph::new(edges).unwrap();
        let d = graph_divergence(&g);
        let scale: f64 = g.edges().iter().map(|e| e.weight).sum();
        prop_assert!(d.total().abs() <= 1e-12 * scale);
    }

    #[test]
    fn smoothing_keeps_mass(a in prop::collection::vec(((0.3..0.7f64, 0.3..0.7f64), -1.0..1.0f64), 1..4)) {
        let atoms: Vec<([f64; 2], f64)> = a.into_iter().map(|((x, y), m)| ([x, y], m)).collect();
        let f = AtomicMeasure::new(atoms).unwrap();
        let g = GridSpec::from_bounds(64, 64, [0.0, 0.0], [1.0, 1.0]).unwrap();
        let s = smooth_onto_grid(&f, 0.05, g).unwrap();
        prop_assert!((s.integral() - f.total()).abs() < 1e-12);
    }

    #[test]
    fn text_formats_round_trip(atoms in prop::collection::vec((point(), -3.0..3.0f64), 1..6)) {
        let m = AtomicMeasure::new(atoms).unwrap();
        prop_assert_eq!(parse_measure(&measure_text(&m)).unwrap(), m.clone());
        let edges: Vec<Edge> = m.atoms.iter().map(|(p, w)| Edge {
            p0: *p,
            p1: [p[0] + 0.25, p[1] - 0.125],
            weight: w.abs() + 0.1,
        }).collect();
        let g = WeightedGraph::new(edges).unwrap();
        prop_assert_eq!(parse_graph(&graph_text(&g)).unwrap(), g);
    }

    #[test]
    fn btf_round_trips_bitwise(seed in any::<u32>(), nx in 4usize..9, ny in 4usize..9) {
        let g = GridSpec::from_bounds(nx, ny, [-1.0, 0.5], [0.3, 2.0]).unwrap();
        let k = seed as f64 / 7.0;
        let u = VectorField2D::from_fn(g, |p| [(k * p[0]).sin(), (k * p[1] + 1.0).ln_1p()]);
        let f = Field::Vector(u);
        let bytes = btf_to_bytes(&f);
        let back = btf_from_bytes(&bytes).unwrap();
        prop_assert_eq!(btf_to_bytes(&back), bytes);
        prop_assert_eq!(back, f);
    }
}
