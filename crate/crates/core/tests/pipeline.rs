//! Synthesis, diagnostics and solver working together.

use ebt_core::diagnostics::{
    field_report, run_report, slice_alpha_bound, slice_flux, Axis, ReportWindow, Window,
};
use ebt_core::energy::{energy, EnergyParams};
use ebt_core::grid::divergence;
use ebt_core::measures::{AtomicMeasure, Edge, WeightedGraph};
use ebt_core::solver::{mass_guard, solve, MassStatus, SolverConfig};
use ebt_core::synth::synthesize_graph;
use ebt_core::{GridSpec, VectorField2D};

fn segment() -> WeightedGraph {
    WeightedGraph::new(vec![Edge {
        p0: [0.0, 0.0],
        p1: [1.0, 0.0],
        weight: 1.0,
    }])
    .unwrap()
}

fn segment_grid(n: usize) -> GridSpec {
    GridSpec::from_bounds(n, n, [-0.2, -0.7], [1.2, 0.7]).unwrap()
}

#[test]
fn segment_flux_is_constant() {
    let syn = synthesize_graph(&segment(), 0.01, 0.8, segment_grid(512), true).unwrap();
    let w = Window::new([0.2, -0.5], [0.8, 0.5]).unwrap();
    let s = slice_flux(&syn.field, Axis::X, &w).unwrap();
    for m in &s.flux {
        assert!((m - 1.0).abs() < 1e-2, "flux {m}");
    }
}

#[test]
fn flux_doubles_past_a_junction() {
    let e = |p0, p1, weight| Edge { p0, p1, weight };
    let g = WeightedGraph::new(vec![
        e([0.1, 0.5], [0.5, 0.5], 0.5),
        e([0.3, 0.15], [0.5, 0.5], 0.5),
        e([0.5, 0.5], [0.9, 0.5], 1.0),
    ])
    .unwrap();
    let grid = GridSpec::from_bounds(512, 512, [0.0, 0.0], [1.0, 1.0]).unwrap();
    let syn = synthesize_graph(&g, 0.003, 0.8, grid, true).unwrap();
    let before = slice_flux(
        &syn.field,
        Axis::X,
        &Window::new([0.2, 0.3], [0.25, 0.7]).unwrap(),
    )
    .unwrap();
    let after = slice_flux(
        &syn.field,
        Axis::X,
        &Window::new([0.75, 0.3], [0.8, 0.7]).unwrap(),
    )
    .unwrap();
    for m in &before.flux {
        assert!((m - 0.5).abs() < 5e-3, "before {m}");
    }
    for m in &after.flux {
        assert!((m - 1.0).abs() < 1e-2, "after {m}");
    }
}

#[test]
fn slice_bound_ratio_approaches_one_from_below() {
    // Window edges sit a quarter cell before grid lines, so it holds as
    // many face lines as cell columns.
    let grid = segment_grid(512);
    let x = |i: usize| grid.origin[0] + (i as f64 - 0.25) * grid.hx;
    let window = ReportWindow {
        axis: Axis::X,
        window: Window::new([x(1), -0.7], [x(512), 0.7]).unwrap(),
    };
    let mut ratios = Vec::new();
    for eps in [0.02, 0.01, 0.005] {
        let syn = synthesize_graph(&segment(), eps, 0.8, grid, true).unwrap();
        let r = field_report(&syn.field, 0.8, eps, 0.0, &[window]).unwrap();
        ratios.push(r.slices[0].ratio);
    }
    println!("slice ratios {ratios:?}");
    assert!(ratios.windows(2).all(|w| w[1] > w[0]), "{ratios:?}");
    assert!(ratios.iter().all(|&r| r <= 1.0), "{ratios:?}");
    assert!(ratios[2] > 0.95, "{ratios:?}");
}

#[test]
fn constant_slice_bound_closed_form() {
    let g = GridSpec::from_bounds(40, 20, [0.0, 0.0], [2.0, 1.0]).unwrap();
    let u = VectorField2D::from_fn(g, |_| [0.3, 0.0]);
    let s = slice_flux(&u, Axis::X, &Window::new([0.0, 0.0], [2.0, 1.0]).unwrap()).unwrap();
    let length = s.positions.len() as f64 * s.spacing;
    assert!((slice_alpha_bound(&s, 0.7) - 0.3f64.powf(0.7) * length).abs() < 1e-13);
}

#[test]
fn recovery_mass_is_close_to_the_segment_mass() {
    let syn = synthesize_graph(&segment(), 0.01, 0.8, segment_grid(512), true).unwrap();
    let m = syn.field.mass();
    assert_eq!(mass_guard(&syn.field, 1.2), MassStatus::Feasible);
    assert!((m - 1.0).abs() <= 0.2, "mass {m}");
    match mass_guard(&syn.field, 0.9 * m) {
        MassStatus::Exceeded { by } => assert!(by > 0.0),
        s => panic!("expected an exceeded bound, got {s:?}"),
    }
}

#[test]
fn report_terms_match_the_breakdown() {
    let eps = 0.01;
    let syn = synthesize_graph(&segment(), eps, 0.8, segment_grid(256), true).unwrap();
    let r = field_report(&syn.field, 0.8, eps, 0.0, &[]).unwrap();
    let b = energy(&syn.field, &EnergyParams::new(0.8, eps, 0.0).unwrap());
    assert_eq!(r.total, b.total);
    assert!(r.concave_term > 0.0 && r.dirichlet_term > 0.0);
    let zero = field_report(&VectorField2D::zeros(segment_grid(64)), 0.8, eps, 0.0, &[]).unwrap();
    assert_eq!(
        (
            zero.total,
            zero.mass,
            zero.concave_term,
            zero.dirichlet_term
        ),
        (0.0, 0.0, 0.0, 0.0)
    );
}

fn small_config() -> SolverConfig {
    let grid = GridSpec::from_bounds(32, 32, [0.0, 0.0], [1.0, 1.0]).unwrap();
    let mut cfg = SolverConfig::new(0.8, grid, 0.1, 0.05, 2).unwrap();
    cfg.steps_per_stage = 30;
    cfg.sigma = Some(0.08);
    cfg.log_every = 1;
    cfg
}

#[test]
fn solver_runs_are_deterministic() {
    let fp = AtomicMeasure::dirac([0.3, 0.5], 1.0);
    let fm = AtomicMeasure::dirac([0.7, 0.5], 1.0);
    let a = solve(&small_config(), &fp, &fm).unwrap();
    let b = solve(&small_config(), &fp, &fm).unwrap();
    assert_eq!(a.energy_trace, b.energy_trace);
    assert_eq!(a.u, b.u);
}

#[test]
fn accepted_steps_never_increase_the_objective() {
    let fp = AtomicMeasure::dirac([0.3, 0.5], 1.0);
    let fm = AtomicMeasure::dirac([0.7, 0.5], 1.0);
    let r = solve(&small_config(), &fp, &fm).unwrap();
    for w in r.energy_trace.windows(2) {
        if w[0].stage == w[1].stage && w[0].restart == w[1].restart {
            assert!(
                w[1].objective <= w[0].objective,
                "{} -> {}",
                w[0].objective,
                w[1].objective
            );
        }
    }
    // Exact mode keeps the smoothed data as divergence.
    let d = divergence(&r.u);
    let err: f64 = d
        .values
        .iter()
        .zip(r.f.values.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        * r.u.spec.cell_area();
    assert!(err <= 1e-6);
    let rep = run_report(&r, &small_config(), &[]).unwrap();
    assert_eq!(rep.total, r.energy);
}
