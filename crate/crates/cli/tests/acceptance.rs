//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Runs without the libtest harness so the per-criterion lines always reach
//! the terminal.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use terw_core::context::{build_context, verify_operator_identities};
use terw_core::decomposer::{decompose, norm_ladder_check};
use terw_core::generators::{folded_cube, odd_cycle, odd_graph};
use terw_core::multiplicity::{build_upsilon, solve_multiplicities, trace_lhs, trace_rhs};
use terw_core::predictor::{feasibility, predict_b, predict_bstar, ModuleClass};
use terw_core::qs::{exclusion_check, fit_qs, qs_multiplicity, qs_predict_b, qs_predict_bstar};
use terw_core::scheme::spectral_data;
use terw_core::{AssociationScheme, Error, IrreducibleModule, ModuleCensus, SpectralData, Tolerances};

type Outcome = Result<String, String>;
type Builder = fn(usize) -> terw_core::Result<AssociationScheme>;

struct Case {
    name: &'static str,
    family: &'static str,
    diameter: usize,
    scheme: AssociationScheme,
    spectral: SpectralData,
    /// Oracle modules at two base vertices.
    modules: Vec<(usize, Vec<IrreducibleModule>)>,
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn build_cases(tol: &Tolerances) -> Result<(Vec<Case>, f64), String> {
    let start = Instant::now();
    let specs: [(&str, &str, usize, Builder); 5] = [
        ("C7", "odd_cycle", 3, odd_cycle),
        ("C9", "odd_cycle", 4, odd_cycle),
        ("O4", "odd_graph", 3, odd_graph),
        ("F7", "folded_cube", 3, folded_cube),
        ("F9", "folded_cube", 4, folded_cube),
    ];
    let mut cases = Vec::new();
    for (name, family, diameter, build) in specs {
        let scheme = build(diameter).map_err(|e| format!("{name}: {e}"))?;
        let spectral = spectral_data(&scheme, tol).map_err(|e| format!("{name}: {e}"))?;
        cases.push(Case {
            name,
            family,
            diameter,
            scheme,
            spectral,
            modules: Vec::new(),
        });
    }
    Ok((cases, start.elapsed().as_secs_f64()))
}

fn decompose_cases(cases: &mut [Case], tol: &Tolerances) -> Result<(), String> {
    for case in cases {
        for x in [0, case.scheme.n() - 1] {
            let ctx = build_context(&case.scheme, &case.spectral, x).map_err(|e| e.to_string())?;
            let modules = decompose(&ctx, tol, 0).map_err(|e| format!("{} at {x}: {e}", case.name))?;
            case.modules.push((x, modules));
        }
    }
    Ok(())
}

/// Exact integer check of the Bose-Mesner products, counted pair by pair.
fn exact_products(s: &AssociationScheme) -> Result<(), String> {
    let n = s.n();
    let d = s.classes();
    for x in 0..n {
        for y in 0..n {
            let mut counts = vec![0u64; (d + 1) * (d + 1)];
            for z in 0..n {
                counts[s.relation(x, z) * (d + 1) + s.relation(z, y)] += 1;
            }
            let h = s.relation(x, y);
            for i in 0..=d {
                for j in 0..=d {
                    ensure(counts[i * (d + 1) + j] == s.tensor().p(h, i, j), || {
                        format!("(A_{i} A_{j})[{x}, {y}] != p^{h}_{i}{j}")
                    })?;
                }
            }
        }
    }
    Ok(())
}

fn criterion_1(cases: &[Case], build_secs: f64) -> Outcome {
    let start = Instant::now();
    for c in cases {
        exact_products(&c.scheme).map_err(|e| format!("{}: {e}", c.name))?;
        ensure(c.scheme.verify_bose_mesner_closure().is_ok(), || format!("{}: closure", c.name))?;
        ensure(c.scheme.classes() == c.diameter, || format!("{}: diameter", c.name))?;
    }
    let secs = build_secs + start.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.1} s"))?;
    Ok(format!("5 schemes, exact products, {secs:.2} s"))
}

fn criterion_2(cases: &[Case], tol: &Tolerances) -> Outcome {
    let mut worst = 0.0_f64;
    for c in cases {
        for x in [0, c.scheme.n() / 2, c.scheme.n() - 1] {
            let ctx = build_context(&c.scheme, &c.spectral, x).map_err(|e| e.to_string())?;
            let report = verify_operator_identities(&ctx, tol);
            let limit = 1e-9 * c.scheme.n() as f64;
            for needed in ["F = E*_D A E*_D", "F E*_i = 0 (i < D)", "R E*_i = E*_{i+1} R"] {
                ensure(report.checks.iter().any(|k| k.name == needed), || {
                    format!("{}: {needed} not checked", c.name)
                })?;
            }
            for k in &report.checks {
                ensure(k.residual < limit, || format!("{} at {x}: {} = {:e}", c.name, k.name, k.residual))?;
            }
            worst = worst.max(report.worst() / c.scheme.n() as f64);
        }
    }
    Ok(format!("3 base vertices each, worst residual / n = {worst:.1e}"))
}

fn criterion_3(cases: &[Case]) -> Outcome {
    let mut count = 0;
    for c in cases {
        for (x, modules) in &c.modules {
            for m in modules {
                let tag = || format!("{} at {x}: module ({}, {}, {})", c.name, m.r, m.t, m.d);
                ensure(m.thin && m.dual_thin, || format!("{} not thin", tag()))?;
                ensure(m.r + m.d == c.diameter, || format!("{} has r + d != D", tag()))?;
                ensure(2 * m.t + m.d >= c.diameter, || format!("{} has 2t + d < D", tag()))?;
                count += 1;
            }
        }
    }
    Ok(format!("{count} modules thin, dual thin, r + d = D, 2t + d >= D"))
}

fn criterion_4(cases: &[Case], tol: &Tolerances) -> Outcome {
    let (mut entry, mut spec, mut trace) = (0.0_f64, 0.0_f64, 0.0_f64);
    for c in cases {
        let (th, ts) = (&c.spectral.theta, &c.spectral.theta_star);
        for (x, modules) in &c.modules {
            for m in modules {
                let class = ModuleClass::predict(m.t, m.d, th, ts).map_err(|e| e.to_string())?;
                let e = (&m.measured_b - &class.b).amax().max((&m.measured_bstar - &class.bstar).amax());
                ensure(e < 1e-6, || format!("{} at {x}: ({}, {}) off by {e:e}", c.name, m.t, m.d))?;
                let f = feasibility(&class, th, ts, tol);
                let s = f.eigen_residual.max(f.dual_eigen_residual);
                let t = f.trace_residual.max(f.dual_trace_residual);
                ensure(s < 1e-8 && t < 1e-8, || format!("{}: ({}, {}) spectrum {s:e} trace {t:e}", c.name, m.t, m.d))?;
                entry = entry.max(e);
                spec = spec.max(s);
                trace = trace.max(t);
            }
        }
    }
    Ok(format!("entrywise {entry:.1e}, spectra {spec:.1e}, traces {trace:.1e}"))
}

fn criterion_5(cases: &[Case]) -> Outcome {
    let mut smallest = f64::INFINITY;
    for c in cases {
        for (x, modules) in &c.modules {
            let ctx = build_context(&c.scheme, &c.spectral, *x).map_err(|e| e.to_string())?;
            for m in modules {
                let r = norm_ladder_check(&ctx, m);
                ensure(r.products.len() == m.d && r.dual_products.len() == m.d, || "product count".into())?;
                ensure(r.products_positive, || format!("{}: ({}, {}) {:?}", c.name, m.t, m.d, r.products))?;
                smallest = r.products.iter().chain(&r.dual_products).fold(smallest, |a, &p| a.min(p));
            }
        }
    }
    Ok(format!("all 2d products positive, smallest {smallest:.3}"))
}

fn criterion_6(cases: &[Case]) -> Outcome {
    let mut worst = 0.0_f64;
    let mut cells = 0;
    for c in cases {
        let ctx = build_context(&c.scheme, &c.spectral, 0).map_err(|e| e.to_string())?;
        for &(t, d) in &build_upsilon(c.diameter).cells {
            let lhs = trace_lhs(&ctx, t, d);
            let rhs = trace_rhs(&c.spectral, t, d);
            let rel = (lhs - rhs).abs() / rhs.abs();
            ensure(rel < 1e-6, || format!("{}: ({t}, {d}) {lhs} vs {rhs}", c.name))?;
            worst = worst.max(rel);
            cells += 1;
        }
    }
    Ok(format!("{cells} cells, worst relative error {worst:.1e}"))
}

fn criterion_7(cases: &[Case], tol: &Tolerances) -> Outcome {
    for c in cases {
        let table = solve_multiplicities(&c.spectral, tol).map_err(|e| format!("{}: {e}", c.name))?;
        ensure(table.max_residual() < 1e-4, || format!("{}: residual {:e}", c.name, table.max_residual()))?;
        ensure(table.get(0, c.diameter) == 1, || format!("{}: mult(0, D) != 1", c.name))?;
        ensure(table.total_dimension() == c.scheme.n() as u64, || format!("{}: dimension sum", c.name))?;
        let want: BTreeMap<(usize, usize), u64> = table
            .entries
            .iter()
            .filter(|e| e.mult > 0)
            .map(|e| ((e.t, e.d), e.mult))
            .collect();
        for seed in [11, 22, 33] {
            let ctx = build_context(&c.scheme, &c.spectral, 0).map_err(|e| e.to_string())?;
            let census = ModuleCensus::from_modules(&decompose(&ctx, tol, seed).map_err(|e| e.to_string())?);
            let got: BTreeMap<(usize, usize), u64> =
                census.entries.iter().map(|e| ((e.t, e.d), e.count as u64)).collect();
            ensure(got == want, || format!("{} seed {seed}: census {got:?} vs recurrence {want:?}", c.name))?;
        }
    }
    Ok("recurrence equals census on 5 schemes x 3 seeds".into())
}

fn criterion_8(cases: &[Case], tol: &Tolerances) -> Outcome {
    let start = Instant::now();
    let mut closed = 0;
    for c in cases.iter().filter(|c| c.family == "odd_cycle") {
        let (th, ts) = (&c.spectral.theta, &c.spectral.theta_star);
        let p = fit_qs(th, ts, tol).map_err(|e| format!("{}: {e}", c.name))?;
        ensure(p.fit_residual < 1e-8, || format!("{}: fit residual {:e}", c.name, p.fit_residual))?;
        let h_rel = (p.h - p.h_closed_form()).norm() / p.h.norm();
        let hs_rel = (p.hstar - p.hstar_closed_form()).norm() / p.hstar.norm();
        ensure(h_rel < 1e-8 && hs_rel < 1e-8, || format!("{}: h {h_rel:e}, h* {hs_rel:e}", c.name))?;
        for &(t, d) in &build_upsilon(c.diameter).cells {
            let fail = |e: Error| e.to_string();
            let eb = (qs_predict_b(&p, t, d, tol).map_err(fail)? - predict_b(t, d, th, ts).map_err(fail)?).amax();
            let ebs =
                (qs_predict_bstar(&p, t, d, tol).map_err(fail)? - predict_bstar(t, d, th, ts).map_err(fail)?).amax();
            ensure(eb < 1e-8 && ebs < 1e-8, || format!("{}: ({t}, {d}) B {eb:e} B* {ebs:e}", c.name))?;
        }
        let table = solve_multiplicities(&c.spectral, tol).map_err(|e| e.to_string())?;
        let mut covered = 0;
        for e in &table.entries {
            match qs_multiplicity(&p, e.t, e.d, tol) {
                Ok(v) => {
                    ensure((v - e.raw).abs() < 1e-6, || format!("{}: ({}, {}) {v} vs {}", c.name, e.t, e.d, e.raw))?;
                    covered += 1;
                }
                Err(Error::OutOfRange { .. }) if e.d + 3 < c.diameter => {}
                Err(other) => return Err(format!("{}: {other}", c.name)),
            }
        }
        let expected = table.entries.iter().filter(|e| e.d + 3 >= c.diameter).count();
        ensure(covered == expected, || format!("{}: {covered} closed forms", c.name))?;
        closed += covered;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("took {secs:.1} s"))?;
    Ok(format!("C7 and C9 fitted, {closed} closed-form cells, {secs:.3} s"))
}

fn write_scheme(dir: &Path, c: &Case) -> String {
    let path = dir.join(format!("{}.json", c.name));
    std::fs::write(&path, terw_core::SchemeFile::from_scheme(&c.scheme).to_json()).expect("write scheme");
    path.to_string_lossy().into_owned()
}

fn criterion_9(cases: &[Case], dir: &Path) -> Outcome {
    for c in cases.iter().filter(|c| c.name == "O4" || c.name == "F7") {
        let out = Command::new(env!("CARGO_BIN_EXE_terw-lab"))
            .args(["qs", "--json", "--scheme", &write_scheme(dir, c)])
            .output()
            .map_err(|e| e.to_string())?;
        let v: serde_json::Value = serde_json::from_slice(&out.stdout).map_err(|e| e.to_string())?;
        ensure(v["excluded"] == c.family && v.get("params").is_none(), || format!("{}: {v}", c.name))?;
        ensure(exclusion_check(&c.spectral.pp).family() == Some(c.family), || c.name.to_string())?;
    }
    Ok("O4 reported as odd_graph, F7 as folded_cube, no fit".into())
}

fn criterion_10(cases: &[Case], dir: &Path) -> Outcome {
    let mut slowest = 0.0_f64;
    for c in cases {
        let start = Instant::now();
        let status = Command::new(env!("CARGO_BIN_EXE_terw-lab"))
            .args(["verify", "--scheme", &write_scheme(dir, c)])
            .stdout(std::process::Stdio::null())
            .status()
            .map_err(|e| e.to_string())?;
        let secs = start.elapsed().as_secs_f64();
        ensure(status.code() == Some(0), || format!("{}: exit {status}", c.name))?;
        ensure(secs < 120.0, || format!("{}: {secs:.1} s", c.name))?;
        slowest = slowest.max(secs);
    }
    Ok(format!("verify exits 0 on all 5 schemes, slowest {slowest:.2} s"))
}

fn main() {
    let tol = Tolerances::default();
    let dir = tempfile::tempdir().expect("temp dir");
    let mut failures = 0;
    let mut report = |id: u32, title: &str, outcome: Outcome| {
        let (status, detail) = match outcome {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {id:>2} [PRIMARY] {status}  {title}: {detail}");
    };

    let (mut cases, build_secs) = match build_cases(&tol) {
        Ok(x) => x,
        Err(e) => {
            println!("criterion  1 [PRIMARY] FAIL  scheme construction: {e}");
            std::process::exit(1);
        }
    };
    let decomposed = decompose_cases(&mut cases, &tol);
    report(1, "scheme axioms", criterion_1(&cases, build_secs));
    report(2, "operator identities", criterion_2(&cases, &tol));
    let oracle = |f: &dyn Fn() -> Outcome| decomposed.clone().and_then(|_| f());
    report(3, "thin modules and endpoints", oracle(&|| criterion_3(&cases)));
    report(4, "formula vs oracle", oracle(&|| criterion_4(&cases, &tol)));
    report(5, "positivity", oracle(&|| criterion_5(&cases)));
    report(6, "trace formula", criterion_6(&cases));
    report(7, "multiplicity recurrence", criterion_7(&cases, &tol));
    report(8, "q,s engine", criterion_8(&cases, &tol));
    report(9, "exclusion guard", criterion_9(&cases, dir.path()));
    report(10, "end-to-end verify", criterion_10(&cases, dir.path()));

    if failures > 0 {
        println!("acceptance: {failures} criteria failed");
        std::process::exit(1);
    }
    println!("acceptance: all 10 criteria passed");
}
