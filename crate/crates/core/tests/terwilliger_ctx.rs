mod common;

use common::{small_schemes, spectral, test_schemes, trivial_scheme};
use terw_core::context::{build_context, triangle_vanishing_check, verify_operator_identities};
use terw_core::generators::{folded_cube, odd_cycle, odd_graph};
use terw_core::{Error, Tolerances};

fn max_abs(m: &nalgebra::DMatrix<f64>) -> f64 {
    m.amax()
}

#[test]
fn identities_hold_at_two_base_vertices() {
    let tol = Tolerances::default();
    for (name, s) in test_schemes() {
        let sp = spectral(&s);
        for x in [0, s.n() - 1] {
            let ctx = build_context(&s, &sp, x).unwrap();
            let report = verify_operator_identities(&ctx, &tol);
            let bad: Vec<_> = report.checks.iter().filter(|c| !c.pass).collect();
            assert!(bad.is_empty(), "{name} at {x}: {bad:?}");
            assert!(report.worst() < 1e-9 * s.n() as f64);
        }
    }
}

#[test]
fn almost_bipartite_flat_part_lives_on_the_last_shell() {
    let tol = Tolerances::default();
    for (name, s) in test_schemes() {
        let sp = spectral(&s);
        let ctx = build_context(&s, &sp, 0).unwrap();
        let report = verify_operator_identities(&ctx, &tol);
        for needed in ["F = E*_D A E*_D", "F E*_i = 0 (i < D)"] {
            let check = report.checks.iter().find(|c| c.name == needed);
            assert!(check.is_some_and(|c| c.pass), "{name}: {needed}");
        }
    }
}

#[test]
fn seven_cycle_shells_and_exact_split() {
    let s = odd_cycle(3).unwrap();
    let sp = spectral(&s);
    let ctx = build_context(&s, &sp, 0).unwrap();
    let traces: Vec<f64> = (0..=3).map(|i| ctx.estar(i).trace()).collect();
    assert_eq!(traces, vec![1.0, 2.0, 2.0, 2.0]);
    let split = &ctx.raise + &ctx.flat + &ctx.lower;
    assert_eq!(max_abs(&(&ctx.a - split)), 0.0);
    let report = verify_operator_identities(&ctx, &Tolerances::default());
    assert!(report.worst() < 1e-10, "{}", report.worst());
}

#[test]
fn raising_map_shifts_odd_graph_shells() {
    let s = odd_graph(3).unwrap();
    let sp = spectral(&s);
    for x in [0, 17, 34] {
        let ctx = build_context(&s, &sp, x).unwrap();
        let lhs = &ctx.raise * ctx.estar(1);
        let rhs = ctx.estar(2) * &ctx.raise;
        assert!(max_abs(&(lhs - rhs)) < 1e-9);
    }
}

#[test]
fn folded_seven_cube_flat_block() {
    let s = folded_cube(3).unwrap();
    let sp = spectral(&s);
    let ctx = build_context(&s, &sp, 0).unwrap();
    for i in 0..3 {
        assert!(max_abs(&(&ctx.flat * ctx.estar(i))) < 1e-10);
    }
    let top = ctx.estar(3) * &ctx.a * ctx.estar(3);
    assert!(max_abs(&(&ctx.flat - top)) < 1e-10);
}

#[test]
fn dual_adjacency_sum_is_n_times_first_dual_idempotent() {
    for (name, s) in small_schemes() {
        let sp = spectral(&s);
        let ctx = build_context(&s, &sp, 1).unwrap();
        let n = s.n() as f64;
        let sum: Vec<f64> = (0..s.n())
            .map(|y| ctx.astar_diag.iter().map(|row| row[y]).sum())
            .collect();
        for (y, v) in sum.iter().enumerate() {
            let want = if y == 1 { n } else { 0.0 };
            assert!((v - want).abs() < 1e-9 * n, "{name}: y = {y}");
        }
    }
}

#[test]
fn triangle_condition_has_no_counterexamples() {
    let tol = Tolerances::default();
    for (name, s) in small_schemes() {
        let sp = spectral(&s);
        let report = triangle_vanishing_check(&build_context(&s, &sp, 0).unwrap(), &tol);
        assert!(report.counterexamples.is_empty(), "{name}: {:?}", report.counterexamples);
        assert!(report.checked > 0);
    }
    let t = trivial_scheme();
    let sp = spectral(&t);
    let report = triangle_vanishing_check(&build_context(&t, &sp, 0).unwrap(), &tol);
    assert!(report.counterexamples.is_empty());
}

#[test]
fn base_vertex_out_of_range() {
    let s = odd_cycle(3).unwrap();
    let sp = spectral(&s);
    assert!(matches!(
        build_context(&s, &sp, 7),
        Err(Error::VertexOutOfRange { vertex: 7, n: 7 })
    ));
}
