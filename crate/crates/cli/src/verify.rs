//! The staged end-to-end check behind `terw-lab verify`.

use std::time::Instant;

use serde::Serialize;
use terw_core::context::{build_context, triangle_vanishing_check, verify_operator_identities};
use terw_core::decomposer::{decompose, norm_ladder_check, orthogonality_residual, IrreducibleModule};
use terw_core::generators::load_scheme;
use terw_core::multiplicity::{
    build_upsilon, precedes, recurrence_rhs_coefficient, restricted_trace, solve_multiplicities, trace_lhs,
    trace_rhs,
};
use terw_core::predictor::{feasibility, ModuleClass};
use terw_core::qs::{exclusion_check, fit_qs, qs_multiplicity, qs_predict_b, qs_predict_bstar};
use terw_core::scheme::spectral_data;
use terw_core::{Error, ModuleCensus, Tolerances};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    Skip,
}

impl Status {
    pub fn label(self) -> &'static str {
        match self {
            Status::Pass => "pass",
            Status::Fail => "fail",
            Status::Skip => "skip",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub status: Status,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub residual: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
    /// Milliseconds spent in the stage; only recorded on request so that
    /// reports stay byte-for-byte reproducible by default.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub elapsed_ms: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub scheme: String,
    pub vertex: usize,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub verdict: Status,
    /// Set when the scheme file could not be read or parsed at all.
    #[serde(skip)]
    pub input_error: bool,
}

struct Recorder {
    checks: Vec<Check>,
    timings: bool,
    clock: Instant,
}

impl Recorder {
    fn push(&mut self, name: &str, status: Status, residual: Option<f64>, detail: Option<String>) {
        let elapsed_ms = self.timings.then(|| self.clock.elapsed().as_secs_f64() * 1e3);
        self.clock = Instant::now();
        self.checks.push(Check {
            name: name.to_string(),
            status,
            residual,
            detail,
            elapsed_ms,
        });
    }

    /// Pass iff `residual < limit`.
    fn bound(&mut self, name: &str, residual: f64, limit: f64) {
        let status = if residual < limit { Status::Pass } else { Status::Fail };
        self.push(name, status, Some(residual), Some(format!("limit {limit:e}")));
    }

    fn flag(&mut self, name: &str, ok: bool, detail: Option<String>) {
        self.push(name, if ok { Status::Pass } else { Status::Fail }, None, detail);
    }

    fn error(&mut self, name: &str, err: &Error) {
        self.push(name, Status::Fail, None, Some(err.to_string()));
    }

    fn skip(&mut self, names: &[&str], reason: &str) {
        for name in names {
            self.push(name, Status::Skip, None, Some(reason.to_string()));
        }
    }
}

const DECOMPOSITION_STAGES: &[&str] = &[
    "decomposition",
    "thin",
    "dual_thin",
    "diameter_equals_dual_diameter",
    "r_plus_d_equals_D",
    "two_t_plus_d_at_least_D",
    "unique_trivial_module",
];
const PREDICTOR_STAGES: &[&str] = &[
    "predictor_vs_oracle",
    "predicted_spectra",
    "trace_identities",
    "a0star_formula",
    "positivity",
    "norm_ladder",
    "isomorphism_classes",
];
const MULTIPLICITY_STAGES: &[&str] = &[
    "trace_formula",
    "restricted_trace",
    "multiplicity_recurrence",
    "recurrence_vs_oracle",
    "mult_0D_is_1",
    "dimension_sum",
];
const QS_STAGES: &[&str] = &[
    "qs_fit",
    "qs_h_closed_form",
    "qs_hstar_closed_form",
    "qs_nonvanishing",
    "qs_vs_theta_B",
    "qs_vs_theta_Bstar",
    "qs_closed_form_multiplicities",
];

/// Runs every stage in order, recording failures and carrying on where the
/// later stages still have what they need.
pub fn run_verify(path: &str, vertex: usize, seed: u64, tol: &Tolerances, timings: bool) -> VerifyReport {
    let mut rec = Recorder {
        checks: Vec::new(),
        timings,
        clock: Instant::now(),
    };
    let mut input_error = false;
    let all_later: Vec<&str> = [
        "bose_mesner_closure",
        "p_polynomial",
        "q_polynomial",
        "spectral_invariants",
        "krein_nonnegative",
    ]
        .into_iter()
        .chain(["almost_bipartite", "operator_identities", "triangle_vanishing"])
        .chain(DECOMPOSITION_STAGES.iter().copied())
        .chain(PREDICTOR_STAGES.iter().copied())
        .chain(MULTIPLICITY_STAGES.iter().copied())
        .chain(QS_STAGES.iter().copied())
        .collect();

    let scheme = match load_scheme(path) {
        Ok(s) => {
            rec.flag("axioms", true, Some(format!("n = {}, D = {}", s.n(), s.classes())));
            s
        }
        Err(e) => {
            input_error = matches!(e, Error::Io { .. } | Error::Parse(_) | Error::InvalidInput(_));
            rec.error("axioms", &e);
            rec.skip(&all_later, "scheme did not load");
            return finish(path, vertex, seed, rec, input_error);
        }
    };
    let closure = scheme.verify_bose_mesner_closure();
    rec.flag(
        "bose_mesner_closure",
        closure.is_ok() && scheme.associate_sum_is_all_ones(),
        closure.err().map(|w| format!("A_{} A_{} fails at ({}, {})", w.0, w.1, w.2, w.3)),
    );

    let spectral = match spectral_data(&scheme, tol) {
        Ok(s) => {
            rec.flag("p_polynomial", true, Some(format!("ordering {:?}", s.p_ordering)));
            s
        }
        Err(e) => {
            rec.error("p_polynomial", &e);
            rec.skip(&all_later[2..], "not P-polynomial");
            return finish(path, vertex, seed, rec, input_error);
        }
    };
    rec.flag(
        "q_polynomial",
        spectral.is_q_polynomial(),
        spectral.q_ordering.as_ref().map(|o| format!("ordering {o:?}")),
    );
    let inv = spectral.invariant_residuals(&scheme);
    let worst = inv.iter().fold(0.0_f64, |a, (_, r)| a.max(*r));
    let min_krein = krein_minimum(&spectral);
    rec.bound("spectral_invariants", worst, 1e-8);
    rec.push(
        "krein_nonnegative",
        if min_krein >= -tol.krein_zero { Status::Pass } else { Status::Fail },
        Some(min_krein),
        Some("smallest Krein parameter".into()),
    );
    let almost_bipartite = spectral.pp.is_almost_bipartite();
    rec.flag("almost_bipartite", almost_bipartite, Some(format!("a = {:?}", spectral.pp.a)));

    let ctx = match build_context(&scheme, &spectral, vertex) {
        Ok(c) => c,
        Err(e) => {
            let input = matches!(e, Error::VertexOutOfRange { .. });
            rec.error("operator_identities", &e);
            let rest: Vec<&str> = all_later.iter().copied().skip_while(|s| *s != "triangle_vanishing").collect();
            rec.skip(&rest, "no context");
            return finish(path, vertex, seed, rec, input_error || input);
        }
    };
    let ids = verify_operator_identities(&ctx, tol);
    let failing: Vec<String> = ids.checks.iter().filter(|c| !c.pass).map(|c| c.name.clone()).collect();
    rec.push(
        "operator_identities",
        if failing.is_empty() { Status::Pass } else { Status::Fail },
        Some(ids.worst()),
        Some(if failing.is_empty() {
            format!("{} identities, limit {:e}", ids.checks.len(), tol.identity * scheme.n() as f64)
        } else {
            format!("failing: {}", failing.join(", "))
        }),
    );
    let tri = triangle_vanishing_check(&ctx, tol);
    rec.flag(
        "triangle_vanishing",
        tri.counterexamples.is_empty(),
        Some(format!("{} triples, {} counterexamples", tri.checked, tri.counterexamples.len())),
    );

    let modules = match decompose(&ctx, tol, seed) {
        Ok(m) => m,
        Err(e) => {
            rec.error("decomposition", &e);
            rec.skip(&DECOMPOSITION_STAGES[1..], "decomposition failed");
            rec.skip(PREDICTOR_STAGES, "decomposition failed");
            rec.skip(MULTIPLICITY_STAGES, "decomposition failed");
            rec.skip(QS_STAGES, "decomposition failed");
            return finish(path, vertex, seed, rec, input_error);
        }
    };
    let census = ModuleCensus::from_modules(&modules);
    let leak = modules.iter().fold(0.0_f64, |a, m| a.max(m.invariance_residual));
    let complete = census.total_dimension == scheme.n();
    let orth = orthogonality_residual(&modules);
    rec.push(
        "decomposition",
        if complete && orth < 1e-8 && leak < 1e-8 { Status::Pass } else { Status::Fail },
        Some(orth.max(leak)),
        Some(format!("{} modules, total dimension {}", modules.len(), census.total_dimension)),
    );
    let big_d = spectral.classes();
    rec.flag("thin", modules.iter().all(|m| m.thin), None);
    rec.flag("dual_thin", modules.iter().all(|m| m.dual_thin), None);
    rec.flag("diameter_equals_dual_diameter", modules.iter().all(|m| m.d == m.dstar), None);
    if almost_bipartite {
        rec.flag("r_plus_d_equals_D", modules.iter().all(|m| m.r + m.d == big_d), None);
    } else {
        rec.skip(&["r_plus_d_equals_D"], "not almost-bipartite");
    }
    rec.flag("two_t_plus_d_at_least_D", modules.iter().all(|m| 2 * m.t + m.d >= big_d), None);
    let top: Vec<&IrreducibleModule> = modules.iter().filter(|m| m.d == big_d).collect();
    rec.flag(
        "unique_trivial_module",
        top.len() == 1 && top[0].r == 0 && top[0].t == 0,
        None,
    );

    if !almost_bipartite || !spectral.is_q_polynomial() {
        let reason = "not an almost-bipartite P- and Q-polynomial scheme";
        rec.skip(PREDICTOR_STAGES, reason);
        rec.skip(MULTIPLICITY_STAGES, reason);
        rec.skip(QS_STAGES, reason);
        return finish(path, vertex, seed, rec, input_error);
    }

    predictor_stages(&mut rec, &ctx, &modules, tol);
    let table = multiplicity_stages(&mut rec, &ctx, &modules, &census, tol);
    qs_stages(&mut rec, &spectral, table.as_ref(), tol);
    finish(path, vertex, seed, rec, input_error)
}

fn krein_minimum(spectral: &terw_core::SpectralData) -> f64 {
    let s = spectral.classes() + 1;
    let mut min = f64::INFINITY;
    for h in 0..s {
        for i in 0..s {
            for j in 0..s {
                min = min.min(spectral.krein(h, i, j));
            }
        }
    }
    min
}

fn predictor_stages(
    rec: &mut Recorder,
    ctx: &terw_core::TerwContext<'_>,
    modules: &[IrreducibleModule],
    tol: &Tolerances,
) {
    let sp = ctx.spectral;
    let (th, ts) = (&sp.theta, &sp.theta_star);
    let mut formula = 0.0_f64;
    let mut spectra = 0.0_f64;
    let mut traces = 0.0_f64;
    let mut a0 = 0.0_f64;
    let mut ladder = 0.0_f64;
    let mut positive = true;
    let mut problems = Vec::new();
    for m in modules {
        let class = match ModuleClass::predict(m.t, m.d, th, ts) {
            Ok(c) => c,
            Err(e) => {
                problems.push(e.to_string());
                continue;
            }
        };
        if m.measured_b.shape() != class.b.shape() || m.measured_bstar.shape() != class.bstar.shape() {
            problems.push(format!("module ({}, {}) was not measured", m.t, m.d));
            continue;
        }
        formula = formula
            .max((&m.measured_b - &class.b).amax())
            .max((&m.measured_bstar - &class.bstar).amax());
        let feas = feasibility(&class, th, ts, tol);
        spectra = spectra.max(feas.eigen_residual).max(feas.dual_eigen_residual);
        traces = traces.max(feas.trace_residual).max(feas.dual_trace_residual);
        a0 = a0.max(feas.a0star_residual);
        let norms = norm_ladder_check(ctx, m);
        ladder = ladder.max(norms.residual).max(norms.dual_residual);
        positive &= norms.products_positive;
    }
    let detail = (!problems.is_empty()).then(|| problems.join("; "));
    if problems.is_empty() {
        rec.bound("predictor_vs_oracle", formula, tol.formula);
    } else {
        rec.push("predictor_vs_oracle", Status::Fail, Some(formula), detail);
    }
    rec.bound("predicted_spectra", spectra, tol.eigen);
    rec.bound("trace_identities", traces, tol.eigen);
    rec.bound("a0star_formula", a0, tol.formula);
    rec.flag("positivity", positive, None);
    rec.bound("norm_ladder", ladder, 1e-8);

    // Modules of the same class must be isomorphic in the measured sense.
    let mut iso = 0.0_f64;
    for (i, a) in modules.iter().enumerate() {
        for b in &modules[i + 1..] {
            if (a.t, a.d) == (b.t, b.d) && a.measured_b.shape() == b.measured_b.shape() {
                iso = iso
                    .max((&a.measured_b - &b.measured_b).amax())
                    .max((&a.measured_bstar - &b.measured_bstar).amax());
            }
        }
    }
    rec.bound("isomorphism_classes", iso, tol.formula);
}

fn multiplicity_stages(
    rec: &mut Recorder,
    ctx: &terw_core::TerwContext<'_>,
    modules: &[IrreducibleModule],
    census: &ModuleCensus,
    tol: &Tolerances,
) -> Option<terw_core::MultiplicityTable> {
    let sp = ctx.spectral;
    let big_d = sp.classes();
    let upsilon = build_upsilon(big_d);
    let mut worst = 0.0_f64;
    for &(t, d) in &upsilon.cells {
        let lhs = trace_lhs(ctx, t, d);
        let rhs = trace_rhs(sp, t, d);
        worst = worst.max((lhs - rhs).abs() / rhs.abs().max(f64::MIN_POSITIVE));
    }
    rec.bound("trace_formula", worst, tol.trace_rel);

    // One representative per class suffices: isomorphic modules were
    // compared above.
    let mut restricted = 0.0_f64;
    let mut seen = Vec::new();
    for m in modules {
        if seen.contains(&(m.t, m.d)) {
            continue;
        }
        seen.push((m.t, m.d));
        for &(t, d) in &upsilon.cells {
            let got = restricted_trace(ctx, &m.basis, t, d);
            let want = if precedes((m.t, m.d), (t, d)) {
                recurrence_rhs_coefficient(t, d, m.t, m.d, &sp.theta, &sp.theta_star).unwrap_or(f64::NAN)
            } else {
                0.0
            };
            restricted = restricted.max((got - want).abs() / want.abs().max(1.0));
        }
    }
    rec.bound("restricted_trace", restricted, tol.trace_rel);

    let table = match solve_multiplicities(sp, tol) {
        Ok(t) => t,
        Err(e) => {
            rec.error("multiplicity_recurrence", &e);
            rec.skip(&MULTIPLICITY_STAGES[3..], "recurrence failed");
            return None;
        }
    };
    rec.bound("multiplicity_recurrence", table.max_residual(), tol.integrality);
    let mismatches: Vec<String> = upsilon
        .cells
        .iter()
        .filter(|&&(t, d)| table.get(t, d) != census.count(t, d) as u64)
        .map(|&(t, d)| format!("({t}, {d}): recurrence {} vs oracle {}", table.get(t, d), census.count(t, d)))
        .collect();
    let extra = census.entries.iter().any(|e| !upsilon.contains(e.t, e.d));
    rec.flag(
        "recurrence_vs_oracle",
        mismatches.is_empty() && !extra,
        (!mismatches.is_empty()).then(|| mismatches.join("; ")),
    );
    rec.flag("mult_0D_is_1", table.get(0, big_d) == 1, None);
    rec.flag(
        "dimension_sum",
        table.total_dimension() == sp.n() as u64,
        Some(format!("{} of {}", table.total_dimension(), sp.n())),
    );
    Some(table)
}

fn qs_stages(
    rec: &mut Recorder,
    sp: &terw_core::SpectralData,
    table: Option<&terw_core::MultiplicityTable>,
    tol: &Tolerances,
) {
    let excl = exclusion_check(&sp.pp);
    if let Some(family) = excl.family() {
        rec.skip(QS_STAGES, &format!("excluded family: {family}"));
        return;
    }
    if sp.classes() < 3 {
        rec.skip(QS_STAGES, "q,s form needs D >= 3");
        return;
    }
    let (th, ts) = (&sp.theta, &sp.theta_star);
    let p = match fit_qs(th, ts, tol) {
        Ok(p) => p,
        Err(e) => {
            rec.error("qs_fit", &e);
            rec.skip(&QS_STAGES[1..], "fit failed");
            return;
        }
    };
    rec.bound("qs_fit", p.fit_residual.max(p.recurrence_residual), tol.qs);
    let cons = p.consistency(th, ts);
    rec.bound("qs_h_closed_form", cons[3].1, tol.qs);
    rec.bound("qs_hstar_closed_form", cons[4].1, tol.qs);
    let margin = p.nonvanishing_margins().into_iter().fold(f64::INFINITY, f64::min);
    rec.push(
        "qs_nonvanishing",
        if margin > 1e-6 { Status::Pass } else { Status::Fail },
        Some(margin),
        Some("smallest distance from a forbidden value".into()),
    );
    let upsilon = build_upsilon(sp.classes());
    let (mut eb, mut ebs) = (0.0_f64, 0.0_f64);
    let mut errors = Vec::new();
    for &(t, d) in &upsilon.cells {
        let theta_b = terw_core::predictor::predict_b(t, d, th, ts);
        let theta_bs = terw_core::predictor::predict_bstar(t, d, th, ts);
        match (qs_predict_b(&p, t, d, tol), theta_b) {
            (Ok(a), Ok(b)) => eb = eb.max((a - b).amax()),
            (Err(e), _) | (_, Err(e)) => errors.push(e.to_string()),
        }
        match (qs_predict_bstar(&p, t, d, tol), theta_bs) {
            (Ok(a), Ok(b)) => ebs = ebs.max((a - b).amax()),
            (Err(e), _) | (_, Err(e)) => errors.push(e.to_string()),
        }
    }
    if errors.is_empty() {
        rec.bound("qs_vs_theta_B", eb, tol.qs);
        rec.bound("qs_vs_theta_Bstar", ebs, tol.qs);
    } else {
        rec.push("qs_vs_theta_B", Status::Fail, Some(eb), Some(errors.join("; ")));
        rec.push("qs_vs_theta_Bstar", Status::Fail, Some(ebs), None);
    }
    let Some(table) = table else {
        rec.skip(&["qs_closed_form_multiplicities"], "recurrence unavailable");
        return;
    };
    let mut worst = 0.0_f64;
    let mut covered = 0;
    let mut failure = None;
    for e in &table.entries {
        match qs_multiplicity(&p, e.t, e.d, tol) {
            Ok(v) => {
                covered += 1;
                worst = worst.max((v - e.raw).abs());
            }
            Err(Error::OutOfRange { .. }) => {}
            Err(err) => failure = Some(err.to_string()),
        }
    }
    match failure {
        Some(msg) => rec.push("qs_closed_form_multiplicities", Status::Fail, Some(worst), Some(msg)),
        None => {
            let status = if worst < 1e-6 { Status::Pass } else { Status::Fail };
            rec.push(
                "qs_closed_form_multiplicities",
                status,
                Some(worst),
                Some(format!("{covered} cells with a closed form")),
            );
        }
    }
}

fn finish(path: &str, vertex: usize, seed: u64, rec: Recorder, input_error: bool) -> VerifyReport {
    let verdict = if rec.checks.iter().any(|c| c.status == Status::Fail) {
        Status::Fail
    } else {
        Status::Pass
    };
    VerifyReport {
        scheme: path.to_string(),
        vertex,
        seed,
        checks: rec.checks,
        verdict,
        input_error,
    }
}

impl VerifyReport {
    /// Plain-text table with the same rows as the JSON rendering.
    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(4).max(5);
        let mut out = format!("verify {} (vertex {}, seed {})\n", self.scheme, self.vertex, self.seed);
        out += &format!("{:<6} {:<width$} {:>12}  detail\n", "status", "check", "residual");
        for c in &self.checks {
            let residual = c.residual.map(|r| format!("{r:.3e}")).unwrap_or_else(|| "-".into());
            let mut detail = c.detail.clone().unwrap_or_default();
            if let Some(ms) = c.elapsed_ms {
                detail = format!("{detail} [{ms:.1} ms]");
            }
            out += &format!("{:<6} {:<width$} {:>12}  {}\n", c.status.label(), c.name, residual, detail.trim());
        }
        out += &format!("verdict: {}\n", self.verdict.label());
        out
    }
}
