//! Closed-form intersection matrices of irreducible modules of an
//! almost-bipartite P- and Q-polynomial scheme, as functions of the dual
//! endpoint `t`, the diameter `d` and the two eigenvalue sequences.
//!
//! `B[(i, i - 1)] = c_i(W)`, `B[(i, i)] = a_i(W)`, `B[(i, i + 1)] = b_i(W)`;
//! the same layout is used for the dual matrix.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{ser_matrix, tridiagonal_eigenvalues};
use crate::multiplicity::in_upsilon;
use crate::tolerance::Tolerances;

fn diameter_of(theta: &[f64], theta_star: &[f64]) -> Result<usize> {
    if theta.is_empty() || theta.len() != theta_star.len() {
        return Err(Error::InvalidInput(format!(
            "eigenvalue sequences of lengths {} and {}",
            theta.len(),
            theta_star.len()
        )));
    }
    Ok(theta.len() - 1)
}

fn check_cell(t: usize, d: usize, diameter: usize) -> Result<()> {
    if in_upsilon(t, d, diameter) {
        Ok(())
    } else {
        Err(Error::InvalidCell { t, d, diameter })
    }
}

/// Predicted `B(W)` for a module of class `(t, d)`.
pub fn predict_b(t: usize, d: usize, theta: &[f64], theta_star: &[f64]) -> Result<DMatrix<f64>> {
    let big_d = diameter_of(theta, theta_star)?;
    check_cell(t, d, big_d)?;
    let (th, ts) = (theta, theta_star);
    let mut b = DMatrix::zeros(d + 1, d + 1);
    if d == 0 {
        b[(0, 0)] = th[t];
        return Ok(b);
    }
    let r = big_d - d;
    b[(0, 1)] = th[t];
    for i in 1..d {
        b[(i, i - 1)] = (th[t] * (ts[r + i + 1] - ts[r + 1]) - th[t + 1] * (ts[r + i] - ts[r]))
            / (ts[r + i + 1] - ts[r + i - 1]);
        b[(i, i + 1)] = (th[t] * (ts[r + i - 1] - ts[r + 1]) - th[t + 1] * (ts[r + i] - ts[r]))
            / (ts[r + i - 1] - ts[r + i + 1]);
    }
    b[(d, d - 1)] = (th[t] * (ts[r + d] - ts[r + 1]) - th[t + 1] * (ts[r + d] - ts[r]))
        / (ts[r + d] - ts[r + d - 1]);
    b[(d, d)] = (th[t] * (ts[r + d - 1] - ts[r + 1]) - th[t + 1] * (ts[r + d] - ts[r]))
        / (ts[r + d - 1] - ts[r + d]);
    Ok(b)
}

/// Predicted `B*(W)` for a module of class `(t, d)`, with `r = D - d`.
pub fn predict_bstar(t: usize, d: usize, theta: &[f64], theta_star: &[f64]) -> Result<DMatrix<f64>> {
    let big_d = diameter_of(theta, theta_star)?;
    check_cell(t, d, big_d)?;
    let (th, ts) = (theta, theta_star);
    let r = big_d - d;
    let mut out = DMatrix::zeros(d + 1, d + 1);
    if d == 0 {
        out[(0, 0)] = ts[r];
        return Ok(out);
    }
    let mut c = vec![0.0; d + 1];
    let mut b = vec![0.0; d + 1];
    for i in 1..d {
        let num_common = (th[t + i].powi(2) - th[t].powi(2)) * (ts[r + 2] - ts[r + 1]);
        c[i] = (num_common + (th[t] * th[t + 1] - th[t + i] * th[t + i + 1]) * (ts[r + 1] - ts[r]))
            / ((th[t + i - 1] - th[t + i]) * (th[t + i - 1] - th[t + i + 1]));
        b[i] = (num_common + (th[t] * th[t + 1] - th[t + i] * th[t + i - 1]) * (ts[r + 1] - ts[r]))
            / ((th[t + i + 1] - th[t + i]) * (th[t + i + 1] - th[t + i - 1]));
    }
    c[d] = th[t + d] * (ts[r + 1] - ts[r]) / (th[t + d - 1] - th[t + d]);
    b[0] = th[t] * (ts[r] - ts[r + 1]) / (th[t] - th[t + 1]);
    for i in 0..=d {
        out[(i, i)] = ts[r] - b[i] - c[i];
        if i > 0 {
            out[(i, i - 1)] = c[i];
        }
        if i < d {
            out[(i, i + 1)] = b[i];
        }
    }
    Ok(out)
}

/// Predicted `a*_0(W)` for a module with endpoint `r` and dual endpoint `t`.
pub fn predict_a0star(r: usize, t: usize, theta: &[f64], theta_star: &[f64]) -> Result<f64> {
    let big_d = diameter_of(theta, theta_star)?;
    if r + 1 > big_d || t + 1 > big_d {
        return Err(Error::InvalidCell {
            t,
            d: big_d.saturating_sub(r),
            diameter: big_d,
        });
    }
    let (th, ts) = (theta, theta_star);
    Ok((ts[r + 1] * th[t] - th[t + 1] * ts[r]) / (th[t] - th[t + 1]))
}

/// A cell of the index set together with its predicted matrices.
#[derive(Debug, Clone, Serialize)]
pub struct ModuleClass {
    pub t: usize,
    pub d: usize,
    pub r: usize,
    #[serde(serialize_with = "ser_matrix")]
    pub b: DMatrix<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub bstar: DMatrix<f64>,
    /// From the endpoint formula; absent when `d = 0`.
    pub a0star: Option<f64>,
}

impl ModuleClass {
    pub fn predict(t: usize, d: usize, theta: &[f64], theta_star: &[f64]) -> Result<Self> {
        let b = predict_b(t, d, theta, theta_star)?;
        let bstar = predict_bstar(t, d, theta, theta_star)?;
        let r = theta.len() - 1 - d;
        let a0star = if d >= 1 {
            Some(predict_a0star(r, t, theta, theta_star)?)
        } else {
            None
        };
        Ok(Self {
            t,
            d,
            r,
            b,
            bstar,
            a0star,
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FeasibilityReport {
    pub t: usize,
    pub d: usize,
    /// `b_{i-1}(W) c_i(W)` for `i = 1..=d`.
    pub products: Vec<f64>,
    /// `b*_{i-1}(W) c*_i(W)` for `i = 1..=d`.
    pub dual_products: Vec<f64>,
    pub products_positive: bool,
    /// Largest gap between the spectrum of `B` and `theta_t..theta_{t+d}`.
    pub eigen_residual: f64,
    pub dual_eigen_residual: f64,
    /// `|sum a_i(W) - sum theta_i|` and its dual.
    pub trace_residual: f64,
    pub dual_trace_residual: f64,
    /// Largest deviation of a row sum from `theta_t` (dually `theta*_r`).
    pub row_sum_residual: f64,
    pub dual_row_sum_residual: f64,
    /// `|a0star - B*[0][0]|`, zero when `d = 0`.
    pub a0star_residual: f64,
    pub feasible: bool,
}

fn spectrum_gap(m: &DMatrix<f64>, want: &[f64]) -> f64 {
    let k = m.nrows();
    let lower: Vec<f64> = (1..k).map(|i| m[(i, i - 1)]).collect();
    let upper: Vec<f64> = (1..k).map(|i| m[(i - 1, i)]).collect();
    let diagonal: Vec<f64> = (0..k).map(|i| m[(i, i)]).collect();
    let got = tridiagonal_eigenvalues(&lower, &diagonal, &upper);
    let mut want = want.to_vec();
    want.sort_by(|a, b| a.total_cmp(b));
    got.iter()
        .zip(&want)
        .fold(0.0_f64, |a, (x, y)| a.max((x - y).abs()))
}

fn row_sum_gap(m: &DMatrix<f64>, want: f64) -> f64 {
    m.row_iter()
        .map(|r| (r.sum() - want).abs())
        .fold(0.0, f64::max)
}

/// Positivity, spectrum, trace and row-sum checks for one cell. A cell that
/// fails any of them cannot carry a module.
pub fn feasibility(
    class: &ModuleClass,
    theta: &[f64],
    theta_star: &[f64],
    tol: &Tolerances,
) -> FeasibilityReport {
    let (t, d, r) = (class.t, class.d, class.r);
    let products: Vec<f64> = (1..=d)
        .map(|i| class.b[(i - 1, i)] * class.b[(i, i - 1)])
        .collect();
    let dual_products: Vec<f64> = (1..=d)
        .map(|i| class.bstar[(i - 1, i)] * class.bstar[(i, i - 1)])
        .collect();
    let products_positive = products.iter().chain(&dual_products).all(|&p| p > 0.0);
    let th = &theta[t..=t + d];
    let ts = &theta_star[r..=r + d];
    let eigen_residual = spectrum_gap(&class.b, th);
    let dual_eigen_residual = spectrum_gap(&class.bstar, ts);
    let trace_residual = (class.b.trace() - th.iter().sum::<f64>()).abs();
    let dual_trace_residual = (class.bstar.trace() - ts.iter().sum::<f64>()).abs();
    let row_sum_residual = row_sum_gap(&class.b, theta[t]);
    let dual_row_sum_residual = row_sum_gap(&class.bstar, theta_star[r]);
    let a0star_residual = class
        .a0star
        .map(|a| (a - class.bstar[(0, 0)]).abs())
        .unwrap_or(0.0);
    let feasible = products_positive
        && eigen_residual < tol.eigen
        && dual_eigen_residual < tol.eigen
        && trace_residual < tol.eigen
        && dual_trace_residual < tol.eigen;
    FeasibilityReport {
        t,
        d,
        products,
        dual_products,
        products_positive,
        eigen_residual,
        dual_eigen_residual,
        trace_residual,
        dual_trace_residual,
        row_sum_residual,
        dual_row_sum_residual,
        a0star_residual,
        feasible,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cycle_data(big_d: usize) -> (Vec<f64>, Vec<f64>) {
        let n = (2 * big_d + 1) as f64;
        let th: Vec<f64> = (0..=big_d)
            .map(|i| 2.0 * (2.0 * std::f64::consts::PI * i as f64 / n).cos())
            .collect();
        // theta*_i = m_1 p_i(1) / k_i = p_i(1) for i >= 1, and 2 at i = 0.
        let ts: Vec<f64> = (0..=big_d)
            .map(|i| 2.0 * (2.0 * std::f64::consts::PI * i as f64 / n).cos())
            .collect();
        (th, ts)
    }

    #[test]
    fn trivial_cell_reproduces_cycle_array() {
        let (th, ts) = cycle_data(3);
        let b = predict_b(0, 3, &th, &ts).unwrap();
        let want = [[0.0, 2.0, 0.0, 0.0], [1.0, 0.0, 1.0, 0.0], [0.0, 1.0, 0.0, 1.0], [0.0, 0.0, 1.0, 1.0]];
        for i in 0..4 {
            for j in 0..4 {
                assert!((b[(i, j)] - want[i][j]).abs() < 1e-12, "{i},{j}: {}", b[(i, j)]);
            }
        }
    }

    #[test]
    fn every_cell_is_feasible_or_flagged() {
        let (th, ts) = cycle_data(3);
        let class = ModuleClass::predict(1, 2, &th, &ts).unwrap();
        let rep = feasibility(&class, &th, &ts, &Tolerances::default());
        assert!(rep.eigen_residual < 1e-8 && rep.dual_eigen_residual < 1e-8);
        assert!(rep.row_sum_residual < 1e-10 && rep.a0star_residual < 1e-10);
        assert!((class.b[(0, 1)] - th[1]).abs() < 1e-12);
    }

    #[test]
    fn degenerate_cells() {
        let (th, ts) = cycle_data(3);
        let b = predict_b(2, 0, &th, &ts).unwrap();
        assert_eq!(b.shape(), (1, 1));
        assert_eq!(b[(0, 0)], th[2]);
        let bs = predict_bstar(2, 0, &th, &ts).unwrap();
        assert_eq!(bs[(0, 0)], ts[3]);
        assert!(matches!(predict_b(0, 2, &th, &ts), Err(Error::InvalidCell { .. })));
        assert!(predict_a0star(0, 0, &th, &ts).unwrap().abs() < 1e-12);
    }
}
