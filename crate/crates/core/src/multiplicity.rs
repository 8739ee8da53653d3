//! The index set of module classes, the trace identity and the recurrence
//! that recovers module multiplicities from spectral data alone.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::context::TerwContext;
use crate::error::{Error, Result};
use crate::linalg::trace_of_product;
use crate::predictor::predict_bstar;
use crate::scheme::SpectralData;
use crate::tolerance::Tolerances;

/// Whether `(t, d)` lies in the index set for diameter `big_d`:
/// `0 <= d <= D` and `ceil((D - d) / 2) <= t <= D - d`.
pub fn in_upsilon(t: usize, d: usize, big_d: usize) -> bool {
    d <= big_d && (big_d - d).div_ceil(2) <= t && t <= big_d - d
}

/// `(t, d) <= (t2, d2)` iff `t <= t2` and `t2 + d2 <= t + d`.
pub fn precedes(a: (usize, usize), b: (usize, usize)) -> bool {
    a.0 <= b.0 && b.0 + b.1 <= a.0 + a.1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Upsilon {
    pub diameter: usize,
    /// Cells in a linear extension of the partial order.
    pub cells: Vec<(usize, usize)>,
}

impl Upsilon {
    pub fn contains(&self, t: usize, d: usize) -> bool {
        in_upsilon(t, d, self.diameter)
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

pub fn build_upsilon(big_d: usize) -> Upsilon {
    let mut cells: Vec<(usize, usize)> = (0..=big_d)
        .flat_map(|d| (0..=big_d - d).map(move |t| (t, d)))
        .filter(|&(t, d)| in_upsilon(t, d, big_d))
        .collect();
    // t ascending, then t + d descending: a linear extension of the order.
    cells.sort_by(|a, b| a.0.cmp(&b.0).then((b.0 + b.1).cmp(&(a.0 + a.1))));
    Upsilon {
        diameter: big_d,
        cells,
    }
}

fn matrix_power_apply(op: &DMatrix<f64>, times: usize, m: DMatrix<f64>) -> DMatrix<f64> {
    (0..times).fold(m, |acc, _| op * acc)
}

/// `trace(E_t L*^d R*^d E_t)` from the explicit n x n product.
pub fn trace_lhs(ctx: &TerwContext<'_>, t: usize, d: usize) -> f64 {
    let e = ctx.idempotent(t as isize);
    let raised = matrix_power_apply(&ctx.raise_star, d, e.clone());
    let lowered = matrix_power_apply(&ctx.lower_star, d, raised);
    trace_of_product(&e, &lowered)
}

/// `m_t * prod_{h=t}^{t+d-1} b*_h c*_{t+d-h}` from the Krein parameters.
pub fn trace_rhs(spectral: &SpectralData, t: usize, d: usize) -> f64 {
    let (c, _, b) = spectral.dual_array();
    (t..t + d).fold(spectral.m[t], |acc, h| acc * b[h] * c[t + d - h])
}

/// Same trace restricted to the subspace spanned by the orthonormal columns
/// of `basis`.
pub fn restricted_trace(ctx: &TerwContext<'_>, basis: &DMatrix<f64>, t: usize, d: usize) -> f64 {
    let e = ctx.idempotent(t as isize);
    let start = &e * basis;
    let raised = matrix_power_apply(&ctx.raise_star, d, start);
    let lowered = matrix_power_apply(&ctx.lower_star, d, raised);
    let projected = &e * lowered;
    (basis.transpose() * projected).trace()
}

/// Coefficient of `mult(i, j)` in the equation for cell `(t, d)`:
/// `prod_{h=t-i}^{t-i+d-1} b*_h(i, j) c*_{h+1}(i, j)`. Zero when `(i, j)` is
/// not below `(t, d)`.
pub fn recurrence_rhs_coefficient(
    t: usize,
    d: usize,
    i: usize,
    j: usize,
    theta: &[f64],
    theta_star: &[f64],
) -> Result<f64> {
    let big_d = theta.len().saturating_sub(1);
    if !in_upsilon(t, d, big_d) {
        return Err(Error::InvalidCell { t, d, diameter: big_d });
    }
    let bs = predict_bstar(i, j, theta, theta_star)?;
    if !precedes((i, j), (t, d)) {
        return Ok(0.0);
    }
    let lo = t - i;
    Ok((lo..lo + d).fold(1.0, |acc, h| acc * bs[(h, h + 1)] * bs[(h + 1, h)]))
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiplicityEntry {
    pub t: usize,
    pub d: usize,
    pub mult: u64,
    /// Value before rounding.
    pub raw: f64,
    /// Distance of `raw` from `mult`.
    pub residual: f64,
    pub lead_coefficient: f64,
    /// The leading coefficient vanished, so the cell carries no module.
    pub forced_zero: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct MultiplicityTable {
    pub diameter: usize,
    pub entries: Vec<MultiplicityEntry>,
}

impl MultiplicityTable {
    /// `mult(t, d)`; zero off the index set.
    pub fn get(&self, t: usize, d: usize) -> u64 {
        self.entries
            .iter()
            .find(|e| e.t == t && e.d == d)
            .map_or(0, |e| e.mult)
    }

    pub fn total_dimension(&self) -> u64 {
        self.entries.iter().map(|e| e.mult * (e.d as u64 + 1)).sum()
    }

    pub fn max_residual(&self) -> f64 {
        self.entries.iter().fold(0.0, |a, e| a.max(e.residual))
    }
}

/// Solves the recurrence cell by cell in the linear-extension order. The
/// left side of each equation is the Krein-parameter product.
pub fn solve_multiplicities(spectral: &SpectralData, tol: &Tolerances) -> Result<MultiplicityTable> {
    if !spectral.pp.is_almost_bipartite() || !spectral.is_q_polynomial() {
        return Err(Error::NotAlmostBipartite);
    }
    let big_d = spectral.classes();
    let (theta, theta_star) = (&spectral.theta, &spectral.theta_star);
    let upsilon = build_upsilon(big_d);
    let star_scale = theta_star.iter().fold(1.0_f64, |a, x| a.max(x.abs()));
    let mut entries: Vec<MultiplicityEntry> = Vec::with_capacity(upsilon.len());
    for &(t, d) in &upsilon.cells {
        let lhs = trace_rhs(spectral, t, d);
        let mut known = 0.0;
        for e in &entries {
            if precedes((e.t, e.d), (t, d)) && e.mult > 0 {
                known += e.mult as f64 * recurrence_rhs_coefficient(t, d, e.t, e.d, theta, theta_star)?;
            }
        }
        let lead = recurrence_rhs_coefficient(t, d, t, d, theta, theta_star)?;
        let scale = star_scale.powi(2 * d as i32);
        if lead.abs() < 1e-10 * scale {
            entries.push(MultiplicityEntry {
                t,
                d,
                mult: 0,
                raw: 0.0,
                residual: 0.0,
                lead_coefficient: lead,
                forced_zero: true,
            });
            continue;
        }
        let raw = (lhs - known) / lead;
        let rounded = raw.round();
        let residual = (raw - rounded).abs();
        if residual > tol.integrality {
            return Err(Error::NonIntegerMultiplicity { t, d, value: raw });
        }
        if rounded < 0.0 {
            return Err(Error::NegativeMultiplicity { t, d, value: raw });
        }
        entries.push(MultiplicityEntry {
            t,
            d,
            mult: rounded as u64,
            raw,
            residual,
            lead_coefficient: lead,
            forced_zero: false,
        });
    }
    Ok(MultiplicityTable {
        diameter: big_d,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upsilon_for_diameter_three() {
        let u = build_upsilon(3);
        let mut cells = u.cells.clone();
        cells.sort();
        assert_eq!(cells, vec![(0, 3), (1, 1), (1, 2), (2, 0), (2, 1), (3, 0)]);
        assert_eq!(u.cells[0], (0, 3));
    }

    #[test]
    fn upsilon_for_diameter_seven_has_twenty_cells() {
        assert_eq!(build_upsilon(7).len(), 20);
    }

    #[test]
    fn bottom_cell_is_unique_minimum() {
        for big_d in 0..8 {
            let u = build_upsilon(big_d);
            for &c in &u.cells {
                assert!(precedes((0, big_d), c));
                assert_eq!(precedes(c, (0, big_d)), c == (0, big_d));
            }
        }
    }

    #[test]
    fn diagonal_coefficient_of_point_cell_is_one() {
        let th = [2.0, 0.5, -1.0, -1.5];
        let ts = th;
        assert_eq!(recurrence_rhs_coefficient(3, 0, 3, 0, &th, &ts).unwrap(), 1.0);
    }
}
