//! `terw-lab`: command-line front end for the terw-core analysis pipeline.

mod verify;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};
use terw_core::context::build_context;
use terw_core::decomposer::decompose;
use terw_core::generators::{load_scheme, FamilySpec, DEFAULT_VERTEX_CAP};
use terw_core::multiplicity::{build_upsilon, solve_multiplicities};
use terw_core::predictor::{feasibility, ModuleClass};
use terw_core::qs::{exclusion_check, fit_qs};
use terw_core::scheme::{detect_p_polynomial, spectral_data, AssociationScheme, SpectralData};
use terw_core::{Error, Family, ModuleCensus, SchemeFile, Tolerances};

use verify::{run_verify, Status};

#[derive(Parser)]
#[command(name = "terw-lab", version, about = "Terwilliger-algebra analysis of P- and Q-polynomial schemes")]
struct Cli {
    /// Emit machine-readable JSON instead of text.
    #[arg(long, global = true)]
    json: bool,
    /// Override the formula and trace tolerances.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Seed for the randomized decomposition.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Base vertex.
    #[arg(long, global = true, default_value_t = 0)]
    vertex: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a built-in family to a scheme file.
    Gen {
        #[arg(long)]
        family: Family,
        #[arg(long = "D")]
        diameter: usize,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_VERTEX_CAP)]
        cap: usize,
    },
    /// Check the scheme axioms and list polynomial orderings.
    Validate {
        #[arg(long)]
        scheme: PathBuf,
    },
    /// Spectral data: eigenvalues, multiplicities, Krein parameters.
    Analyze {
        #[arg(long)]
        scheme: PathBuf,
    },
    /// Predicted intersection matrices for one module class.
    Predict {
        #[arg(long)]
        scheme: PathBuf,
        #[arg(long)]
        t: usize,
        #[arg(long)]
        d: usize,
    },
    /// Decompose the standard module into irreducible modules.
    Decompose {
        #[arg(long)]
        scheme: PathBuf,
    },
    /// Module multiplicities from the recurrence.
    Multiplicities {
        #[arg(long)]
        scheme: PathBuf,
        /// Also decompose and compare against the census.
        #[arg(long)]
        oracle: bool,
    },
    /// Fit the q, s parametrisation.
    Qs {
        #[arg(long)]
        scheme: PathBuf,
    },
    /// Run every check end to end.
    Verify {
        #[arg(long)]
        scheme: PathBuf,
        /// Record per-stage wall-clock times.
        #[arg(long)]
        timings: bool,
    },
}

/// A finished command: a JSON payload, its text rendering and whether every
/// check it made passed.
struct Outcome {
    payload: Value,
    text: String,
    pass: bool,
}

fn is_input_error(e: &Error) -> bool {
    matches!(
        e,
        Error::Io { .. }
            | Error::Parse(_)
            | Error::InvalidInput(_)
            | Error::InvalidParameter(_)
            | Error::VertexOutOfRange { .. }
            | Error::InvalidCell { .. }
            | Error::ResourceLimit { .. }
            | Error::OutOfRange { .. }
    )
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Gen { .. } => "gen",
        Command::Validate { .. } => "validate",
        Command::Analyze { .. } => "analyze",
        Command::Predict { .. } => "predict",
        Command::Decompose { .. } => "decompose",
        Command::Multiplicities { .. } => "multiplicities",
        Command::Qs { .. } => "qs",
        Command::Verify { .. } => "verify",
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut tol = Tolerances::default();
    if let Some(t) = cli.tol {
        tol.formula = t;
        tol.trace_rel = t;
    }
    let name = command_name(&cli.command);
    let result = match &cli.command {
        Command::Verify { scheme, timings } => {
            let report = run_verify(&scheme.to_string_lossy(), cli.vertex, cli.seed, &tol, *timings);
            let code = if report.input_error {
                2
            } else if report.verdict == Status::Pass {
                0
            } else {
                1
            };
            let outcome = Outcome {
                text: report.table(),
                payload: serde_json::to_value(&report).expect("report serializes"),
                pass: report.verdict == Status::Pass,
            };
            emit(cli.json, name, &outcome);
            return ExitCode::from(code);
        }
        cmd => run(cmd, &cli, &tol),
    };
    match result {
        Ok(outcome) => {
            emit(cli.json, name, &outcome);
            ExitCode::from(if outcome.pass { 0 } else { 1 })
        }
        Err(e) => {
            if cli.json {
                let v = json!({"schema": "terw-lab/1", "command": name, "error": e.to_string()});
                out(&format!("{}\n", serde_json::to_string_pretty(&v).expect("json")));
            } else {
                eprintln!("error: {e}");
            }
            ExitCode::from(if is_input_error(&e) { 2 } else { 1 })
        }
    }
}

fn emit(as_json: bool, name: &str, outcome: &Outcome) {
    if as_json {
        let mut v = json!({"schema": "terw-lab/1", "command": name, "pass": outcome.pass});
        if let (Value::Object(dst), Value::Object(src)) = (&mut v, &outcome.payload) {
            for (k, val) in src {
                dst.insert(k.clone(), val.clone());
            }
        }
        out(&format!("{}\n", serde_json::to_string_pretty(&v).expect("json")));
    } else {
        out(&outcome.text);
    }
}

/// Writes to stdout, ignoring a closed pipe.
fn out(text: &str) {
    let _ = std::io::stdout().lock().write_all(text.as_bytes());
}

fn to_value<T: Serialize>(x: &T) -> Value {
    serde_json::to_value(x).expect("value serializes")
}

fn load(path: &PathBuf) -> Result<(AssociationScheme, String), Error> {
    Ok((load_scheme(path)?, path.to_string_lossy().into_owned()))
}

fn fmt_vec(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{:.6}", clean(*x))).collect();
    format!("[{}]", parts.join(", "))
}

/// Flush negative zero and round-off noise for display.
fn clean(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        0.0
    } else {
        x
    }
}

fn matrix_text(m: &nalgebra::DMatrix<f64>) -> String {
    let mut s = String::new();
    for r in m.row_iter() {
        let cells: Vec<String> = r.iter().map(|x| format!("{:>11.6}", clean(*x))).collect();
        s += &format!("  {}\n", cells.join(" "));
    }
    s
}

fn run(cmd: &Command, cli: &Cli, tol: &Tolerances) -> Result<Outcome, Error> {
    match cmd {
        Command::Gen {
            family,
            diameter,
            out,
            cap,
        } => {
            let file = SchemeFile::generate(
                FamilySpec {
                    family: *family,
                    diameter: *diameter,
                },
                *cap,
            )?;
            std::fs::write(out, file.to_json()).map_err(|source| Error::Io {
                path: out.to_string_lossy().into_owned(),
                source,
            })?;
            Ok(Outcome {
                text: format!(
                    "wrote {family} D={diameter} ({} vertices) to {}\n",
                    file.n,
                    out.display()
                ),
                payload: json!({"family": family.to_string(), "D": diameter, "n": file.n, "out": out}),
                pass: true,
            })
        }
        Command::Validate { scheme } => validate(scheme),
        Command::Analyze { scheme } => {
            let (s, path) = load(scheme)?;
            let sp = spectral_data(&s, tol)?;
            Ok(analyze(&sp, &path))
        }
        Command::Predict { scheme, t, d } => {
            let (s, _) = load(scheme)?;
            let sp = spectral_data(&s, tol)?;
            require_q(&sp)?;
            let class = ModuleClass::predict(*t, *d, &sp.theta, &sp.theta_star)?;
            let feas = feasibility(&class, &sp.theta, &sp.theta_star, tol);
            let mut text = format!("class (t={t}, d={d}), r={}\nB:\n", class.r);
            text += &matrix_text(&class.b);
            text += "B*:\n";
            text += &matrix_text(&class.bstar);
            if let Some(a) = class.a0star {
                text += &format!("a0*: {:.6}\n", clean(a));
            }
            text += &format!("feasible: {}\n", feas.feasible);
            Ok(Outcome {
                payload: json!({"class": to_value(&class), "feasibility": to_value(&feas)}),
                text,
                pass: feas.feasible,
            })
        }
        Command::Decompose { scheme } => {
            let (s, _) = load(scheme)?;
            let sp = spectral_data(&s, tol)?;
            let ctx = build_context(&s, &sp, cli.vertex)?;
            let modules = decompose(&ctx, tol, cli.seed)?;
            let census = ModuleCensus::from_modules(&modules);
            let mut text = format!("{} modules, total dimension {}\n", modules.len(), census.total_dimension);
            text += "  r  t  d  d*  thin  dual_thin\n";
            for m in &modules {
                text += &format!(
                    "{:>3}{:>3}{:>3}{:>4}  {:<5} {}\n",
                    m.r, m.t, m.d, m.dstar, m.thin, m.dual_thin
                );
            }
            text += "census:\n";
            for e in &census.entries {
                text += &format!("  ({}, {}): {}\n", e.t, e.d, e.count);
            }
            let pass = census.total_dimension == s.n();
            Ok(Outcome {
                payload: json!({"modules": to_value(&modules), "census": to_value(&census)}),
                text,
                pass,
            })
        }
        Command::Multiplicities { scheme, oracle } => {
            let (s, _) = load(scheme)?;
            let sp = spectral_data(&s, tol)?;
            let table = solve_multiplicities(&sp, tol)?;
            let mut text = String::from("  t  d  mult        raw\n");
            for e in &table.entries {
                text += &format!("{:>3}{:>3}{:>6} {:>10.6}\n", e.t, e.d, e.mult, e.raw);
            }
            text += &format!("total dimension {} of {}\n", table.total_dimension(), s.n());
            let mut pass = table.total_dimension() == s.n() as u64;
            let mut payload = json!({"table": to_value(&table)});
            if *oracle {
                let ctx = build_context(&s, &sp, cli.vertex)?;
                let census = ModuleCensus::from_modules(&decompose(&ctx, tol, cli.seed)?);
                let upsilon = build_upsilon(sp.classes());
                let agree = upsilon
                    .cells
                    .iter()
                    .all(|&(t, d)| table.get(t, d) == census.count(t, d) as u64)
                    && census.entries.iter().all(|e| upsilon.contains(e.t, e.d));
                text += &format!("oracle agrees: {agree}\n");
                pass &= agree;
                payload["oracle"] = json!({"census": to_value(&census), "agrees": agree});
            }
            Ok(Outcome { payload, text, pass })
        }
        Command::Qs { scheme } => {
            let (s, _) = load(scheme)?;
            let sp = spectral_data(&s, tol)?;
            require_q(&sp)?;
            let excl = exclusion_check(&sp.pp);
            if let Some(family) = excl.family() {
                return Ok(Outcome {
                    text: format!("excluded family: {family}; no q,s fit\n"),
                    payload: json!({"excluded": family}),
                    pass: true,
                });
            }
            let p = fit_qs(&sp.theta, &sp.theta_star, tol)?;
            let cons = p.consistency(&sp.theta, &sp.theta_star);
            let worst = cons.iter().fold(0.0_f64, |a, (_, r)| a.max(*r));
            let mut text = format!(
                "q  = {:.12} {:+.12}i\ns  = {:.12} {:+.12}i\nh  = {:.12} {:+.12}i\nh* = {:.12} {:+.12}i\nbeta = {:.12}\n",
                p.q.re, p.q.im, p.s.re, p.s.im, p.h.re, p.h.im, p.hstar.re, p.hstar.im, p.beta
            );
            for (name, r) in &cons {
                text += &format!("  {name}: {r:.3e}\n");
            }
            Ok(Outcome {
                payload: json!({"params": to_value(&p), "consistency": cons.iter().map(|(n, r)| json!({"name": n, "residual": r})).collect::<Vec<_>>()}),
                text,
                pass: worst < tol.qs,
            })
        }
        Command::Verify { .. } => unreachable!("handled in main"),
    }
}

fn require_q(sp: &SpectralData) -> Result<(), Error> {
    if sp.is_q_polynomial() {
        Ok(())
    } else {
        Err(Error::OrderingMissing("Q-polynomial"))
    }
}

fn validate(scheme: &PathBuf) -> Result<Outcome, Error> {
    let (s, path) = match load(scheme) {
        Ok(x) => x,
        Err(e @ Error::AxiomViolation { .. }) => {
            return Ok(Outcome {
                text: format!("{}: {e}\n", scheme.display()),
                payload: json!({"valid": false, "violation": e.to_string()}),
                pass: false,
            })
        }
        Err(e) => return Err(e),
    };
    let closure = s.verify_bose_mesner_closure().is_ok() && s.associate_sum_is_all_ones();
    let orderings = detect_p_polynomial(s.tensor());
    let q = spectral_data(&s, &Tolerances::default())
        .ok()
        .and_then(|sp| sp.q_ordering);
    let text = format!(
        "{path}: n = {}, classes = {}\nbose-mesner closure: {closure}\nP-orderings: {orderings:?}\nQ-ordering: {q:?}\n",
        s.n(),
        s.classes()
    );
    Ok(Outcome {
        payload: json!({"valid": true, "n": s.n(), "classes": s.classes(), "closure": closure,
                        "p_orderings": orderings, "q_ordering": q}),
        text,
        pass: closure,
    })
}

fn analyze(sp: &SpectralData, path: &str) -> Outcome {
    let (cs, as_, bs) = sp.dual_array();
    let s = sp.classes() + 1;
    let krein: Vec<Vec<Vec<f64>>> = (0..s)
        .map(|h| (0..s).map(|i| (0..s).map(|j| sp.krein(h, i, j)).collect()).collect())
        .collect();
    let mut text = format!("{path}: n = {}, D = {}\n", sp.n(), sp.classes());
    text += &format!("intersection array: b = {:?}, c = {:?}, a = {:?}\n", sp.pp.b, sp.pp.c, sp.pp.a);
    text += &format!("almost bipartite: {}\n", sp.pp.is_almost_bipartite());
    text += &format!("theta:  {}\n", fmt_vec(&sp.theta));
    text += &format!("theta*: {}\n", fmt_vec(&sp.theta_star));
    text += &format!("m:      {}\n", fmt_vec(&sp.m));
    text += &format!("Q-polynomial: {}\n", sp.is_q_polynomial());
    text += &format!("dual array: b* = {}, c* = {}, a* = {}\n", fmt_vec(&bs), fmt_vec(&cs), fmt_vec(&as_));
    text += "P:\n";
    text += &matrix_text(&sp.eig_p);
    text += "Q:\n";
    text += &matrix_text(&sp.eig_q);
    Outcome {
        payload: json!({
            "n": sp.n(), "D": sp.classes(),
            "b": sp.pp.b, "c": sp.pp.c, "a": sp.pp.a,
            "almost_bipartite": sp.pp.is_almost_bipartite(),
            "p_ordering": sp.p_ordering, "q_ordering": sp.q_ordering,
            "theta": sp.theta, "theta_star": sp.theta_star, "m": sp.m,
            "dual_b": bs, "dual_c": cs, "dual_a": as_,
            "P": terw_core::linalg::to_rows(&sp.eig_p),
            "Q": terw_core::linalg::to_rows(&sp.eig_q),
            "krein": krein,
        }),
        text,
        pass: true,
    }
}
