mod common;

use std::f64::consts::PI;
use std::time::Instant;

use common::spectral;
use num_complex::Complex64;
use terw_core::generators::{folded_cube, odd_cycle, odd_graph};
use terw_core::multiplicity::{build_upsilon, solve_multiplicities};
use terw_core::predictor::{predict_b, predict_bstar};
use terw_core::qs::{exclusion_check, fit_qs, qs_multiplicity, qs_predict_b, qs_predict_bstar};
use terw_core::{Error, Tolerances};

#[test]
fn seven_cycle_fit() {
    let tol = Tolerances::default();
    let sp = spectral(&odd_cycle(3).unwrap());
    let p = fit_qs(&sp.theta, &sp.theta_star, &tol).unwrap();
    let q = Complex64::from_polar(1.0, 2.0 * PI / 7.0);
    assert!((p.beta - (q + q.inv()).re).abs() < 1e-10);
    assert!(p.fit_residual < 1e-10);
    assert!((p.theta0_star - sp.theta_star[0]).abs() < 1e-10);
    assert!((p.h * (Complex64::new(1.0, 0.0) + p.s * p.q) - sp.theta[0]).norm() < 1e-10);
}

#[test]
fn fits_match_closed_forms_on_odd_cycles() {
    let tol = Tolerances::default();
    for d in [3, 4] {
        let sp = spectral(&odd_cycle(d).unwrap());
        let start = Instant::now();
        let p = fit_qs(&sp.theta, &sp.theta_star, &tol).unwrap();
        assert!(p.fit_residual < 1e-8 && p.recurrence_residual < 1e-8);
        assert!((p.h - p.h_closed_form()).norm() / p.h.norm() < 1e-8);
        assert!((p.hstar - p.hstar_closed_form()).norm() / p.hstar.norm() < 1e-8);
        assert!(p.nonvanishing_margins().iter().all(|&m| m > 1e-6));
        for i in 0..=d {
            assert!((p.theta(i).re - sp.theta[i]).abs() < 1e-8);
            assert!((p.theta_star(i).re - sp.theta_star[i]).abs() < 1e-8);
        }
        for (name, r) in p.consistency(&sp.theta, &sp.theta_star) {
            assert!(r < 1e-8, "D = {d}: {name} = {r}");
        }
        assert!(start.elapsed().as_secs_f64() < 5.0);
    }
}

#[test]
fn qs_forms_agree_with_theta_forms_on_every_cell() {
    let tol = Tolerances::default();
    for d in [3, 4] {
        let sp = spectral(&odd_cycle(d).unwrap());
        let p = fit_qs(&sp.theta, &sp.theta_star, &tol).unwrap();
        for &(t, dd) in &build_upsilon(d).cells {
            let b = qs_predict_b(&p, t, dd, &tol).unwrap();
            let bs = qs_predict_bstar(&p, t, dd, &tol).unwrap();
            let tb = predict_b(t, dd, &sp.theta, &sp.theta_star).unwrap();
            let tbs = predict_bstar(t, dd, &sp.theta, &sp.theta_star).unwrap();
            assert!((&b - &tb).amax() < 1e-8, "D = {d}, ({t}, {dd})");
            assert!((&bs - &tbs).amax() < 1e-8, "D = {d}, ({t}, {dd})");
            if dd >= 1 {
                assert!((b[(0, 1)] - sp.theta[t]).abs() < 1e-8);
            } else {
                let one = Complex64::new(1.0, 0.0);
                let a0 = p.h * p.q.powi(-(t as i32)) * (one + p.s * p.q.powi(2 * t as i32 + 1));
                assert!((b[(0, 0)] - a0.re).abs() < 1e-8 && a0.im.abs() < 1e-8);
            }
        }
        let top = qs_predict_bstar(&p, 0, d, &tol).unwrap();
        assert!((top[(1, 0)] - 1.0).abs() < 1e-8);
    }
}

#[test]
fn closed_form_multiplicities_match_the_recurrence() {
    let tol = Tolerances::default();
    for (d, cells) in [(3, 6), (4, 6)] {
        let sp = spectral(&odd_cycle(d).unwrap());
        let p = fit_qs(&sp.theta, &sp.theta_star, &tol).unwrap();
        let table = solve_multiplicities(&sp, &tol).unwrap();
        let mut covered = 0;
        for e in &table.entries {
            match qs_multiplicity(&p, e.t, e.d, &tol) {
                Ok(v) => {
                    covered += 1;
                    assert!((v - e.raw).abs() < 1e-6, "D = {d}, ({}, {}): {v} vs {}", e.t, e.d, e.raw);
                }
                Err(Error::OutOfRange { .. }) => assert!(e.d + 3 < d),
                Err(other) => panic!("{other}"),
            }
        }
        assert_eq!(covered, cells, "D = {d}");
        if d == 3 {
            assert_eq!(covered, table.entries.len());
        }
        assert!((qs_multiplicity(&p, 0, d, &tol).unwrap() - 1.0).abs() < 1e-9);
    }
}

#[test]
fn exclusion_guard() {
    let o4 = spectral(&odd_graph(3).unwrap());
    let r = exclusion_check(&o4.pp);
    assert!(r.is_odd_graph && r.excluded());
    assert_eq!(r.family(), Some("odd_graph"));
    let f7 = spectral(&folded_cube(3).unwrap());
    let r = exclusion_check(&f7.pp);
    assert!(r.is_folded_cube && r.excluded());
    let c7 = spectral(&odd_cycle(3).unwrap());
    let r = exclusion_check(&c7.pp);
    assert!(!r.is_odd_graph && !r.is_folded_cube);
}

#[test]
fn short_diameters_are_rejected() {
    let sp = spectral(&odd_cycle(2).unwrap());
    assert!(matches!(
        fit_qs(&sp.theta, &sp.theta_star, &Tolerances::default()),
        Err(Error::InvalidParameter(_))
    ));
}
