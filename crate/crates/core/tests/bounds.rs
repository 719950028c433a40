use std::sync::OnceLock;

use ricci_lab::bounds::{
    barrier_s, barrier_s_oracle, check_eigen_bound, check_max_principle, check_theorems, lower_bound_b,
    BarrierParams,
};
use ricci_lab::error::Error;
use ricci_lab::flow::{run_flow, FlowConfig, FlowTrace};
use ricci_lab::generate::generate_genus2;
use ricci_lab::mesh::IntrinsicMesh;
use ricci_lab::spectrum::DEFAULT_OVERLAP_FLOOR;

fn config() -> FlowConfig {
    FlowConfig { snapshot_stride: 20, ..FlowConfig::default() }
}

fn perturbed() -> &'static (IntrinsicMesh, FlowTrace) {
    static RUN: OnceLock<(IntrinsicMesh, FlowTrace)> = OnceLock::new();
    RUN.get_or_init(|| {
        let mesh = generate_genus2(3, 0.05, 7).unwrap();
        let trace = run_flow(&mesh, &config()).unwrap();
        (mesh, trace)
    })
}

/// A trace whose input already has constant curvature to 1e-10.
fn constant_curvature() -> &'static FlowTrace {
    static RUN: OnceLock<FlowTrace> = OnceLock::new();
    RUN.get_or_init(|| {
        let mesh = generate_genus2(3, 0.05, 7).unwrap();
        let tight = FlowConfig { eigen_count: 0, convergence_tol: 1e-10, ..FlowConfig::default() };
        let uniform = run_flow(&mesh, &tight).unwrap();
        let baked = uniform.last().state.bake(&mesh).unwrap();
        run_flow(&baked, &config()).unwrap()
    })
}

#[test]
fn barrier_examples() {
    let p = BarrierParams::new(-1.0, -1.0, 1.0).unwrap();
    assert_eq!(barrier_s(0.0, &p), -2.0);
    assert!((barrier_s(2f64.ln(), &p) + 4.0 / 3.0).abs() <= 1e-15);
    for t in [0.1, 1.0, 5.0, 10.0] {
        assert!((barrier_s_oracle(t, &p, 10_000).unwrap() - barrier_s(t, &p)).abs() <= 1e-8);
    }
}

#[test]
fn barrier_rises_from_two_sigma_towards_r() {
    for (r, sigma) in [(-1.0, -1.0), (-2.0, -7.5), (-0.3, -40.0)] {
        let p = BarrierParams::new(r, sigma, 1.0).unwrap();
        let ts: Vec<f64> = (0..=200).map(|n| n as f64 * 0.05 / r.abs()).collect();
        let s: Vec<f64> = ts.iter().map(|&t| barrier_s(t, &p)).collect();
        // Monotone and inside [2 sigma, r], up to rounding.
        let eps = 1e-14 * sigma.abs();
        assert!(s.windows(2).all(|w| w[1] >= w[0] - eps));
        assert!(s.iter().all(|&v| v >= 2.0 * sigma - eps && v <= r + eps));
        assert!((barrier_s(60.0 / r.abs(), &p) - r).abs() <= 1e-9 * r.abs());
    }
}

#[test]
fn lower_bound_is_eigenvalue_times_barrier_ratio_and_decreases() {
    for (r, sigma, lambda0) in [(-1.0, -1.0, 0.3), (-2.0, -7.5, 4.0), (-0.3, -40.0, 1.7)] {
        let p = BarrierParams::new(r, sigma, lambda0).unwrap();
        let mut previous = f64::INFINITY;
        for n in 0..=200 {
            let t = n as f64 * 0.05 / f64::abs(r);
            let b = lower_bound_b(t, &p);
            assert!((b - lambda0 * barrier_s(t, &p) / (2.0 * sigma)).abs() <= 1e-12 * lambda0);
            let eps = 1e-14 * lambda0;
            assert!(b <= previous + eps && b <= lambda0 + eps);
            previous = b;
        }
        assert!((lower_bound_b(0.0, &p) - lambda0).abs() <= 1e-14 * lambda0);
        assert!((lower_bound_b(80.0 / f64::abs(r), &p) - lambda0 * r / (2.0 * sigma)).abs() <= 1e-12 * lambda0);
    }
}

#[test]
fn perturbed_run_satisfies_every_verdict() {
    let (_, trace) = perturbed();
    let tracks = trace.tracks(5, DEFAULT_OVERLAP_FLOOR);
    let report = check_theorems(trace, &tracks, None).unwrap();
    assert!(report.all_ok, "{report:#?}");
    assert_eq!(report.indices.len(), 5);
    assert_eq!(report.kappa_tilde, 0.5 * trace.r);
    for idx in &report.indices {
        assert!(idx.theorem1_ok && idx.theorem2_ok && idx.theorem2b_consistent && idx.barrier_ok);
        assert!(idx.eigen_bound.reliable && idx.pointwise_bound_ok);
    }
}

#[test]
fn initial_snapshot_sits_on_the_barrier() {
    let (_, trace) = perturbed();
    let v = check_max_principle(trace, None).unwrap();
    let first = &v.samples[0];
    assert_eq!(first.t, 0.0);
    assert!((first.min_scalar - 2.0 * trace.sigma).abs() <= 1e-12 * trace.sigma.abs());
    assert!((first.barrier - 2.0 * trace.sigma).abs() <= 1e-12 * trace.sigma.abs());
}

#[test]
fn looser_sigma_keeps_theorem_two() {
    let (_, trace) = perturbed();
    let tracks = trace.tracks(5, DEFAULT_OVERLAP_FLOOR);
    let base = check_theorems(trace, &tracks, None).unwrap();
    let looser = check_theorems(trace, &tracks, Some(2.0 * trace.sigma)).unwrap();
    assert!(looser.sigma_overridden);
    for (a, b) in base.indices.iter().zip(&looser.indices) {
        assert!(b.theorem2a.ok && b.theorem2a.rhs >= a.theorem2a.rhs);
    }
    let tighter = check_theorems(trace, &tracks, Some(0.5 * trace.sigma));
    assert!(matches!(tighter, Err(Error::Precondition(_))));
}

#[test]
fn unconverged_trace_is_refused() {
    let (mesh, _) = perturbed();
    let trace = run_flow(mesh, &FlowConfig { max_steps: 3, ..config() }).unwrap();
    let tracks = trace.tracks(5, DEFAULT_OVERLAP_FLOOR);
    assert!(matches!(check_theorems(&trace, &tracks, None), Err(Error::NotConverged)));
}

#[test]
fn constant_curvature_attains_equality() {
    let trace = constant_curvature();
    assert!(trace.converged && trace.step_count == 0);
    let tracks = trace.tracks(5, DEFAULT_OVERLAP_FLOOR);
    let report = check_theorems(trace, &tracks, None).unwrap();
    assert!(report.all_ok);
    for idx in &report.indices {
        assert!(idx.theorem1.relative_margin() <= 1e-6, "{:?}", idx.theorem1);
        assert!(idx.theorem2c.relative_margin() <= 1e-6, "{:?}", idx.theorem2c);
    }
}

#[test]
fn constant_curvature_trace_satisfies_both_barriers() {
    let trace = constant_curvature();
    let v = check_max_principle(trace, None).unwrap();
    assert!(v.ok && v.worst_margin >= -1e-9 * trace.r.abs());
    for track in trace.tracks(5, DEFAULT_OVERLAP_FLOOR) {
        let e = check_eigen_bound(trace, &track, None).unwrap();
        assert!(e.ok && e.final_ok && e.reliable);
    }
}
