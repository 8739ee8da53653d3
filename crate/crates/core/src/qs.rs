//! The `q, s` parametrisation of the eigenvalue sequences of an
//! almost-bipartite P- and Q-polynomial scheme that is neither an Odd graph
//! nor a folded cube, and the intersection numbers and multiplicities it
//! yields in closed form.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::generators::{folded_cube_capped, odd_graph_capped, DEFAULT_VERTEX_CAP};
use crate::multiplicity::in_upsilon;
use crate::scheme::{AssociationScheme, PPolyArray};
use crate::tolerance::Tolerances;

type C = Complex64;

#[derive(Debug, Clone, Serialize)]
pub struct QsParams {
    pub diameter: usize,
    pub q: C,
    pub s: C,
    pub h: C,
    pub hstar: C,
    pub theta0_star: f64,
    /// `beta = q + 1/q`, common to both three-term recurrences.
    pub beta: f64,
    pub gamma: f64,
    pub gamma_star: f64,
    /// Largest residual of the two recurrences at the fitted constants.
    pub recurrence_residual: f64,
    /// Largest deviation of the fitted forms from the input sequences.
    pub fit_residual: f64,
}

fn ipow(q: C, k: i64) -> C {
    q.powi(k as i32)
}

impl QsParams {
    /// `theta_i = h q^{-i} (1 + s q^{2i+1})`.
    pub fn theta(&self, i: usize) -> C {
        let i = i as i64;
        self.h * ipow(self.q, -i) * (C::new(1.0, 0.0) + self.s * ipow(self.q, 2 * i + 1))
    }

    /// `theta*_i = theta*_0 + h* (1 - q^i)(1 - q^{i-2D-1}) q^{-i}`.
    pub fn theta_star(&self, i: usize) -> C {
        let (i, d) = (i as i64, self.diameter as i64);
        let one = C::new(1.0, 0.0);
        self.theta0_star + self.hstar * (one - ipow(self.q, i)) * (one - ipow(self.q, i - 2 * d - 1)) * ipow(self.q, -i)
    }

    /// `h` from its closed form in `q, s`.
    pub fn h_closed_form(&self) -> C {
        let (q, s, d) = (self.q, self.s, self.diameter as i64);
        (q - ipow(q, 2 * d)) / ((q - 1.0) * (s * ipow(q, 2 * d + 1) + 1.0))
    }

    /// `h*` from its closed form in `q, s`.
    pub fn hstar_closed_form(&self) -> C {
        let (q, s, d) = (self.q, self.s, self.diameter as i64);
        let one = C::new(1.0, 0.0);
        ipow(q, 2 * d + 1) * (one - s * q * q) * (one - s * ipow(q, 3))
            / ((one - q * q) * (one - s * s * ipow(q, 2 * d + 4)))
    }

    /// Distances of the guarded expressions from their forbidden values:
    /// `q^i` from 1 (`1 <= i <= 2D`), `s q^i` from 1 (`2 <= i <= 2D`) and
    /// `s q^i` from -1 (`1 <= i <= 2D + 1`).
    pub fn nonvanishing_margins(&self) -> [f64; 3] {
        let d = self.diameter as i64;
        let margin = |lo: i64, hi: i64, f: &dyn Fn(i64) -> f64| (lo..=hi).map(f).fold(f64::INFINITY, f64::min);
        [
            margin(1, 2 * d, &|i| (ipow(self.q, i) - 1.0).norm()),
            margin(2, 2 * d, &|i| (self.s * ipow(self.q, i) - 1.0).norm()),
            margin(1, 2 * d + 1, &|i| (self.s * ipow(self.q, i) + 1.0).norm()),
        ]
    }

    /// Named residuals of every identity the fit must satisfy. Closed-form
    /// comparisons are relative.
    pub fn consistency(&self, theta: &[f64], theta_star: &[f64]) -> Vec<(String, f64)> {
        let rel = |a: C, b: C| (a - b).norm() / b.norm().max(1e-300);
        let d = self.diameter;
        let th = (0..=d).fold(0.0_f64, |a, i| a.max((self.theta(i) - theta[i]).norm()));
        let ts = (0..=d).fold(0.0_f64, |a, i| a.max((self.theta_star(i) - theta_star[i]).norm()));
        let th0 = (self.h * (self.s * self.q + 1.0) - theta[0]).norm();
        vec![
            ("theta_i = h q^-i (1 + s q^(2i+1))".into(), th),
            ("theta*_i from h*".into(), ts),
            ("theta_0 = h (1 + s q)".into(), th0),
            ("h closed form (relative)".into(), rel(self.h, self.h_closed_form())),
            ("h* closed form (relative)".into(), rel(self.hstar, self.hstar_closed_form())),
        ]
    }
}

/// Least-squares fit of `theta_{i-1} - beta theta_i + theta_{i+1} = gamma`
/// and its dual with a shared `beta`.
fn fit_recurrences(theta: &[f64], theta_star: &[f64]) -> (f64, f64, f64, f64) {
    let d = theta.len() - 1;
    let rows = 2 * (d - 1);
    let mut a = DMatrix::zeros(rows, 3);
    let mut y = DVector::zeros(rows);
    for i in 1..d {
        let k = 2 * (i - 1);
        a[(k, 0)] = theta[i];
        a[(k, 1)] = 1.0;
        y[k] = theta[i - 1] + theta[i + 1];
        a[(k + 1, 0)] = theta_star[i];
        a[(k + 1, 2)] = 1.0;
        y[k + 1] = theta_star[i - 1] + theta_star[i + 1];
    }
    let sol = a
        .clone()
        .svd(true, true)
        .solve(&y, 1e-14)
        .unwrap_or_else(|_| DVector::zeros(3));
    let residual = (&a * &sol - &y).amax();
    (sol[0], sol[1], sol[2], residual)
}

/// Solves `theta_i - theta_0 = h (q^-i - 1) + g (q^{i+1} - q)` at `i = 1, 2`.
fn fit_h_s(q: C, theta: &[f64]) -> Option<(C, C)> {
    let row = |i: i64| (ipow(q, -i) - 1.0, ipow(q, i + 1) - q);
    let (a11, a12) = row(1);
    let (a21, a22) = row(2);
    let (y1, y2) = (C::from(theta[1] - theta[0]), C::from(theta[2] - theta[0]));
    let det = a11 * a22 - a12 * a21;
    if det.norm() < 1e-14 {
        return None;
    }
    let h = (y1 * a22 - a12 * y2) / det;
    let g = (a11 * y2 - a21 * y1) / det;
    if h.norm() < 1e-12 {
        return None;
    }
    Some((h, g / h))
}

/// Fits `q, s, h, h*` to the eigenvalue and dual eigenvalue sequences.
pub fn fit_qs(theta: &[f64], theta_star: &[f64], tol: &Tolerances) -> Result<QsParams> {
    if theta.len() != theta_star.len() || theta.len() < 4 {
        return Err(Error::InvalidParameter(format!(
            "q,s fit needs D >= 3 and matching sequences (got lengths {} and {})",
            theta.len(),
            theta_star.len()
        )));
    }
    let d = theta.len() - 1;
    let (beta, gamma, gamma_star, recurrence_residual) = fit_recurrences(theta, theta_star);
    if recurrence_residual > tol.qs {
        return Err(Error::FitFailure(format!(
            "no common three-term recurrence (residual {recurrence_residual:e})"
        )));
    }
    if (beta - 2.0).abs() < tol.qs || (beta + 2.0).abs() < tol.qs {
        return Err(Error::BetaDegenerate { beta });
    }
    // Roots of q^2 - beta q + 1 = 0; prefer |q| > 1, else Im q >= 0.
    let disc = C::from(beta * beta - 4.0).sqrt();
    let r1 = (C::from(beta) + disc) / 2.0;
    let r2 = (C::from(beta) - disc) / 2.0;
    let preferred = |a: C, b: C| {
        if (a.norm() - b.norm()).abs() > 1e-12 {
            if a.norm() > b.norm() { (a, b) } else { (b, a) }
        } else if a.im >= b.im {
            (a, b)
        } else {
            (b, a)
        }
    };
    let (first, second) = preferred(r1, r2);
    let (q, (h, s)) = match fit_h_s(first, theta) {
        Some(hs) => (first, hs),
        None => match fit_h_s(second, theta) {
            Some(hs) => (second, hs),
            None => return Err(Error::FitFailure("h vanishes for both roots".into())),
        },
    };
    // h* by least squares over i = 1..=D.
    let one = C::new(1.0, 0.0);
    let (mut num, mut den) = (C::new(0.0, 0.0), 0.0);
    for i in 1..=d {
        let i = i as i64;
        let f = (one - ipow(q, i)) * (one - ipow(q, i - 2 * d as i64 - 1)) * ipow(q, -i);
        num += f.conj() * (theta_star[i as usize] - theta_star[0]);
        den += f.norm_sqr();
    }
    if den < 1e-24 {
        return Err(Error::FitFailure("dual eigenvalue form is degenerate".into()));
    }
    let hstar = num / den;
    let mut params = QsParams {
        diameter: d,
        q,
        s,
        h,
        hstar,
        theta0_star: theta_star[0],
        beta,
        gamma,
        gamma_star,
        recurrence_residual,
        fit_residual: 0.0,
    };
    let checks = params.consistency(theta, theta_star);
    params.fit_residual = checks[..3].iter().fold(0.0, |a, (_, r)| a.max(*r));
    if params.fit_residual > tol.qs {
        return Err(Error::FitFailure(format!(
            "fitted forms miss the eigenvalues by {:e}",
            params.fit_residual
        )));
    }
    if hstar.norm() < 1e-12 {
        return Err(Error::FitFailure("h* vanishes".into()));
    }
    Ok(params)
}

fn real_part(m: &DMatrix<C>, tol: f64) -> Result<DMatrix<f64>> {
    let imag = m.iter().fold(0.0_f64, |a, z| a.max(z.im.abs()));
    if imag > tol {
        return Err(Error::FitFailure(format!("imaginary residual {imag:e}")));
    }
    Ok(m.map(|z| z.re))
}

fn check_cell(p: &QsParams, t: usize, d: usize) -> Result<()> {
    if in_upsilon(t, d, p.diameter) {
        Ok(())
    } else {
        Err(Error::InvalidCell {
            t,
            d,
            diameter: p.diameter,
        })
    }
}

/// `B(W)` from the `q, s` forms.
pub fn qs_predict_b(p: &QsParams, t: usize, d: usize, tol: &Tolerances) -> Result<DMatrix<f64>> {
    check_cell(p, t, d)?;
    let (q, s, h) = (p.q, p.s, p.h);
    let (ti, di) = (t as i64, d as i64);
    let one = C::new(1.0, 0.0);
    let mut b = DMatrix::from_element(d + 1, d + 1, C::new(0.0, 0.0));
    if d == 0 {
        b[(0, 0)] = h * ipow(q, -ti) * (one + s * ipow(q, 2 * ti + 1));
        return real_part(&b, tol.qs);
    }
    for i in 1..d {
        let ii = i as i64;
        let den = ipow(q, ti + ii) * (ipow(q, 2 * di - 2 * ii + 1) - 1.0);
        b[(i, i - 1)] = h * (one - ipow(q, ii)) * (one + s * ipow(q, 2 + 2 * di + 2 * ti - ii)) / den;
        b[(i, i + 1)] = h * (ipow(q, 2 * di + 1 - ii) - 1.0) * (one + s * ipow(q, 2 * ti + ii + 1)) / den;
    }
    let den = ipow(q, ti + di) * (q - 1.0);
    b[(d, d - 1)] = h * (one - ipow(q, di)) * (one + s * ipow(q, 2 + di + 2 * ti)) / den;
    b[(d, d)] = h * (ipow(q, di + 1) - 1.0) * (one + s * ipow(q, 1 + di + 2 * ti)) / den;
    b[(0, 1)] = h * ipow(q, -ti) * (s * ipow(q, 2 * ti + 1) + 1.0);
    real_part(&b, tol.qs)
}

/// `B*(W)` from the `q, s` forms, with `r = D - d`.
pub fn qs_predict_bstar(p: &QsParams, t: usize, d: usize, tol: &Tolerances) -> Result<DMatrix<f64>> {
    check_cell(p, t, d)?;
    let (q, s, hs) = (p.q, p.s, p.hstar);
    let (ti, di, big) = (t as i64, d as i64, p.diameter as i64);
    let one = C::new(1.0, 0.0);
    let theta_r = p.theta_star(p.diameter - d);
    let mut out = DMatrix::from_element(d + 1, d + 1, C::new(0.0, 0.0));
    if d == 0 {
        out[(0, 0)] = theta_r;
        return real_part(&out, tol.qs);
    }
    let mut c = vec![C::new(0.0, 0.0); d + 1];
    let mut b = vec![C::new(0.0, 0.0); d + 1];
    for i in 1..d {
        let ii = i as i64;
        c[i] = hs * (one - ipow(q, 2 * ii)) * (one - s * s * ipow(q, 2 + 2 * di + 4 * ti + 2 * ii))
            / (ipow(q, big + di + 1) * (one - s * ipow(q, 2 * ii + 2 * ti)) * (one - s * ipow(q, 1 + 2 * ii + 2 * ti)));
        b[i] = hs * (ipow(q, 2 * di - 2 * ii) - 1.0) * (one - s * s * ipow(q, 2 + 2 * ii + 4 * ti))
            / (ipow(q, big + di - 2 * ii) * (one - s * ipow(q, 2 + 2 * ii + 2 * ti)) * (one - s * ipow(q, 1 + 2 * ii + 2 * ti)));
    }
    c[d] = hs * (one - ipow(q, 2 * di)) * (one + s * ipow(q, 2 * ti + 2 * di + 1))
        / (ipow(q, big + di + 1) * (one - s * ipow(q, 2 * ti + 2 * di)));
    b[0] = hs * (ipow(q, 2 * di) - 1.0) * (one + s * ipow(q, 2 * ti + 1))
        / (ipow(q, big + di) * (one - s * ipow(q, 2 + 2 * ti)));
    for i in 0..=d {
        out[(i, i)] = theta_r - b[i] - c[i];
        if i > 0 {
            out[(i, i - 1)] = c[i];
        }
        if i < d {
            out[(i, i + 1)] = b[i];
        }
    }
    real_part(&out, tol.qs)
}

/// Closed-form `mult(t, d)` for the cells with `d >= D - 3`.
pub fn qs_multiplicity(p: &QsParams, t: usize, d: usize, tol: &Tolerances) -> Result<f64> {
    check_cell(p, t, d)?;
    let big = p.diameter as i64;
    if (d as i64) < big - 3 {
        return Err(Error::OutOfRange {
            t,
            d,
            diameter: p.diameter,
        });
    }
    let (q, s) = (p.q, p.s);
    let one = C::new(1.0, 0.0);
    let qp = |k: i64| ipow(q, k);
    let d2 = 2 * big;
    let dd = d as i64;
    let value = match (t as i64, big - dd) {
        (0, 0) => one,
        (1, 1) => (qp(d2) - 1.0) * (one + s * qp(2)) / ((one - q) * (one + s * qp(d2 + 1))),
        (1, 2) => {
            (qp(d2) - qp(2)) * (one + s * q) * (one + s * qp(2)) * (s * qp(d2 + 2) - 1.0)
                / ((qp(2) - 1.0) * (s * s * qp(d2 + 4) - 1.0) * (one + s * qp(d2 + 1)))
        }
        (2, 2) => {
            (qp(d2) - 1.0) * (qp(d2) - qp(2)) * (one + s * q) * (one + s * qp(4)) * (s * s * qp(d2 + 3) - 1.0)
                / (q * (q + 1.0) * (q - 1.0).powi(2) * (s * s * qp(d2 + 4) - 1.0) * (one + s * qp(d2)) * (one + s * qp(d2 + 1)))
        }
        (2, 3) => {
            (qp(d2) - 1.0) * (qp(d2) - qp(4)) * (one + s * q) * (one + s * qp(2)) * (one + s * qp(4)) * (one - s * qp(d2 + 2))
                / (q * (q - 1.0) * (qp(2) - 1.0) * (one + s * qp(d2 + 1)) * (s * qp(big + 3) - 1.0) * (q + s * qp(d2)) * (one + s * qp(big + 3)))
        }
        (3, 3) => {
            (qp(d2) - 1.0) * (qp(d2) - qp(2)) * (qp(d2) - qp(4)) * (one + s * q) * (one + s * qp(2)) * (one + s * qp(6))
                * (one - s * s * qp(d2 + 3))
                / (qp(2) * (q - 1.0) * (qp(2) - 1.0) * (qp(3) - 1.0) * (one + s * qp(big + 3)) * (s * qp(big + 3) - 1.0)
                    * (q + s * qp(d2)) * (one + s * qp(d2)) * (one + s * qp(d2 + 1)))
        }
        _ => unreachable!("cells with d >= D - 3 are exhausted above"),
    };
    if value.im.abs() > tol.qs * value.norm().max(1.0) {
        return Err(Error::FitFailure(format!(
            "multiplicity at ({t}, {d}) has imaginary part {:e}",
            value.im
        )));
    }
    Ok(value.re)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ExclusionReport {
    pub is_odd_graph: bool,
    pub is_folded_cube: bool,
}

impl ExclusionReport {
    pub fn excluded(&self) -> bool {
        self.is_odd_graph || self.is_folded_cube
    }

    pub fn family(&self) -> Option<&'static str> {
        if self.is_odd_graph {
            Some("odd_graph")
        } else if self.is_folded_cube {
            Some("folded_cube")
        } else {
            None
        }
    }
}

/// Intersection array of the Odd graph of diameter `d`.
pub fn odd_graph_array(d: usize) -> PPolyArray {
    let k = (d + 1) as u64;
    let c: Vec<u64> = (0..=d).map(|i| (i as u64).div_ceil(2)).collect();
    closed_array(d, k, c)
}

/// Intersection array of the folded `(2d+1)`-cube.
pub fn folded_cube_array(d: usize) -> PPolyArray {
    closed_array(d, (2 * d + 1) as u64, (0..=d as u64).collect())
}

fn closed_array(d: usize, k: u64, c: Vec<u64>) -> PPolyArray {
    let b: Vec<u64> = (0..=d).map(|i| if i == d { 0 } else { k - c[i] }).collect();
    let a: Vec<u64> = (0..=d).map(|i| if i == d { k - c[d] } else { 0 }).collect();
    PPolyArray { c, a, b }
}

fn generated_array(scheme: Result<AssociationScheme>, fallback: PPolyArray) -> PPolyArray {
    match scheme {
        Ok(s) => {
            let identity: Vec<usize> = (0..=s.classes()).collect();
            PPolyArray::from_tensor(s.tensor(), &identity).unwrap_or(fallback)
        }
        Err(_) => fallback,
    }
}

/// Compares the intersection array with the Odd graph and the folded cube of
/// the same diameter. The comparison family is generated unless it exceeds
/// the vertex cap, in which case its known array is used.
pub fn exclusion_check(pp: &PPolyArray) -> ExclusionReport {
    let d = pp.diameter();
    if d < 2 {
        return ExclusionReport {
            is_odd_graph: false,
            is_folded_cube: false,
        };
    }
    let is_odd_graph = pp.valency() == (d + 1) as u64
        && *pp == generated_array(odd_graph_capped(d, DEFAULT_VERTEX_CAP), odd_graph_array(d));
    let is_folded_cube = pp.valency() == (2 * d + 1) as u64
        && *pp == generated_array(folded_cube_capped(d, DEFAULT_VERTEX_CAP), folded_cube_array(d));
    ExclusionReport {
        is_odd_graph,
        is_folded_cube,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle(d: usize) -> (Vec<f64>, Vec<f64>) {
        let n = (2 * d + 1) as f64;
        let th: Vec<f64> = (0..=d)
            .map(|i| 2.0 * (2.0 * std::f64::consts::PI * i as f64 / n).cos())
            .collect();
        (th.clone(), th)
    }

    #[test]
    fn cycle_fit_lands_on_root_of_unity() {
        let (th, ts) = cycle(3);
        let p = fit_qs(&th, &ts, &Tolerances::default()).unwrap();
        let want = C::from_polar(1.0, 2.0 * std::f64::consts::PI / 7.0);
        assert!((p.q - want).norm() < 1e-10);
        assert!((p.s - want.inv()).norm() < 1e-10);
        assert!((p.h - 1.0).norm() < 1e-10);
        assert!(p.fit_residual < 1e-10);
        for (name, r) in p.consistency(&th, &ts) {
            assert!(r < 1e-8, "{name}: {r}");
        }
    }

    #[test]
    fn excluded_recurrence_is_degenerate() {
        // Folded 7-cube: theta_i = 7 - 4i, theta*_i likewise linear.
        let th: Vec<f64> = (0..4).map(|i| 7.0 - 4.0 * i as f64).collect();
        let err = fit_qs(&th, &th, &Tolerances::default()).unwrap_err();
        assert!(matches!(err, Error::BetaDegenerate { .. }));
    }

    #[test]
    fn closed_arrays_match_small_generators() {
        assert_eq!(
            generated_array(odd_graph_capped(3, 100), PPolyArray { c: vec![], a: vec![], b: vec![] }),
            odd_graph_array(3)
        );
        assert_eq!(
            generated_array(folded_cube_capped(3, 100), PPolyArray { c: vec![], a: vec![], b: vec![] }),
            folded_cube_array(3)
        );
    }
}
