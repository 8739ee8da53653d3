//! The Terwilliger algebra at a fixed base vertex.
//!
//! `T` itself is never materialised; the context holds its generators and the
//! raising, flat and lowering splits of `A` and `A*`. Classes are indexed in
//! the P-polynomial order and idempotents in the Q-polynomial order.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{max_abs, max_diff, symmetric_eigen_sorted};
use crate::scheme::{AssociationScheme, SpectralData};
use crate::tolerance::Tolerances;

#[derive(Debug, Clone)]
pub struct TerwContext<'a> {
    pub scheme: &'a AssociationScheme,
    pub spectral: &'a SpectralData,
    pub base_vertex: usize,
    /// `dist[y]`: class of `(x, y)` in the P-polynomial order.
    pub dist: Vec<usize>,
    /// Diagonal of `A*_i` for each `i`.
    pub astar_diag: Vec<Vec<f64>>,
    /// Adjacency matrix `A = A_1`.
    pub a: DMatrix<f64>,
    pub raise: DMatrix<f64>,
    pub flat: DMatrix<f64>,
    pub lower: DMatrix<f64>,
    pub raise_star: DMatrix<f64>,
    pub flat_star: DMatrix<f64>,
    pub lower_star: DMatrix<f64>,
}

/// Builds the context at base vertex `x`. Both polynomial orderings must be
/// present in `spectral`.
pub fn build_context<'a>(
    scheme: &'a AssociationScheme,
    spectral: &'a SpectralData,
    x: usize,
) -> Result<TerwContext<'a>> {
    let n = scheme.n();
    if x >= n {
        return Err(Error::VertexOutOfRange { vertex: x, n });
    }
    if spectral.q_ordering.is_none() {
        return Err(Error::OrderingMissing("Q-polynomial"));
    }
    let d = spectral.classes();
    let dist: Vec<usize> = (0..n)
        .map(|y| spectral.class_index(scheme.relation(x, y)))
        .collect();
    let nf = n as f64;
    let astar_diag: Vec<Vec<f64>> = (0..=d)
        .map(|i| (0..n).map(|y| nf * spectral.idempotents()[i][(x, y)]).collect())
        .collect();
    let a = if d == 0 {
        DMatrix::zeros(n, n)
    } else {
        scheme.associate_matrix(spectral.p_ordering[1])
    };
    // R = sum E*_{i+1} A E*_i etc.; E*_i are coordinate projections, so each
    // block is a mask on A.
    let block = |shift: isize| {
        DMatrix::from_fn(n, n, |y, z| {
            if dist[y] as isize == dist[z] as isize + shift {
                a[(y, z)]
            } else {
                0.0
            }
        })
    };
    let raise = block(1);
    let flat = block(0);
    let lower = block(-1);

    let e = spectral.idempotents();
    let astar = &astar_diag[1.min(d)];
    // A* E_i: scale rows of E_i.
    let astar_e: Vec<DMatrix<f64>> = e
        .iter()
        .map(|ei| {
            let mut m = ei.clone();
            for (y, mut row) in m.row_iter_mut().enumerate() {
                row *= astar[y];
            }
            m
        })
        .collect();
    let mut raise_star = DMatrix::zeros(n, n);
    let mut flat_star = DMatrix::zeros(n, n);
    let mut lower_star = DMatrix::zeros(n, n);
    if d > 0 {
        for i in 0..=d {
            flat_star += &e[i] * &astar_e[i];
            if i < d {
                raise_star += &e[i + 1] * &astar_e[i];
            }
            if i > 0 {
                lower_star += &e[i - 1] * &astar_e[i];
            }
        }
    } else {
        flat_star = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(astar.clone()));
    }
    Ok(TerwContext {
        scheme,
        spectral,
        base_vertex: x,
        dist,
        astar_diag,
        a,
        raise,
        flat,
        lower,
        raise_star,
        flat_star,
        lower_star,
    })
}

impl<'a> TerwContext<'a> {
    pub fn n(&self) -> usize {
        self.scheme.n()
    }

    pub fn classes(&self) -> usize {
        self.spectral.classes()
    }

    /// Diagonal of `E*_i` as 0/1 entries; all zero outside `0..=D`.
    pub fn estar_diag(&self, i: isize) -> Vec<f64> {
        self.dist
            .iter()
            .map(|&c| if c as isize == i { 1.0 } else { 0.0 })
            .collect()
    }

    pub fn estar(&self, i: isize) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.estar_diag(i)))
    }

    /// `A* = A*_1` as a matrix.
    pub fn astar(&self) -> DMatrix<f64> {
        let d = self.classes();
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(
            self.astar_diag[1.min(d)].clone(),
        ))
    }

    /// `E_i`, zero outside `0..=D`.
    pub fn idempotent(&self, i: isize) -> DMatrix<f64> {
        self.spectral
            .idempotent(i)
            .cloned()
            .unwrap_or_else(|| DMatrix::zeros(self.n(), self.n()))
    }

    /// Vertices at distance `i` from the base vertex.
    pub fn shell(&self, i: usize) -> Vec<usize> {
        (0..self.n()).filter(|&y| self.dist[y] == i).collect()
    }

    pub fn is_almost_bipartite(&self) -> bool {
        self.spectral.pp.is_almost_bipartite()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityCheck {
    pub name: String,
    pub residual: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IdentityReport {
    pub base_vertex: usize,
    pub checks: Vec<IdentityCheck>,
}

impl IdentityReport {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn worst(&self) -> f64 {
        self.checks.iter().fold(0.0, |a, c| a.max(c.residual))
    }
}

fn scale_cols(m: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, mut col) in out.column_iter_mut().enumerate() {
        col *= d[j];
    }
    out
}

fn scale_rows(m: &DMatrix<f64>, d: &[f64]) -> DMatrix<f64> {
    let mut out = m.clone();
    for (i, mut row) in out.row_iter_mut().enumerate() {
        row *= d[i];
    }
    out
}

/// Residuals of every operator identity the context must satisfy.
pub fn verify_operator_identities(ctx: &TerwContext<'_>, tol: &Tolerances) -> IdentityReport {
    let n = ctx.n();
    let d = ctx.classes() as isize;
    let nf = n as f64;
    let limit = tol.identity * nf;
    let mut checks = Vec::new();
    let mut push = |name: &str, residual: f64| {
        checks.push(IdentityCheck {
            name: name.to_string(),
            residual,
            tolerance: limit,
            pass: residual < limit,
        });
    };

    // Dual idempotents.
    let estar: Vec<Vec<f64>> = (-1..=d + 1).map(|i| ctx.estar_diag(i)).collect();
    let es = |i: isize| &estar[(i + 1) as usize];
    let mut worst = 0.0_f64;
    for i in 0..=d {
        for j in 0..=d {
            for y in 0..n {
                let want = if i == j { es(i)[y] } else { 0.0 };
                worst = worst.max((es(i)[y] * es(j)[y] - want).abs());
            }
        }
    }
    push("E*_i E*_j = delta_ij E*_i", worst);
    let sum_es = (0..n)
        .map(|y| ((0..=d).map(|i| es(i)[y]).sum::<f64>() - 1.0).abs())
        .fold(0.0, f64::max);
    push("sum E*_i = I", sum_es);
    let k = &ctx.spectral.pp;
    let mut trace_err = 0.0_f64;
    let valencies = k.valencies_from_products().unwrap_or_default();
    for i in 0..=d {
        let tr: f64 = es(i).iter().sum();
        let want = valencies.get(i as usize).copied().unwrap_or(0) as f64;
        trace_err = trace_err.max((tr - want).abs());
    }
    push("trace E*_i = k_i", trace_err);

    // Dual associate matrices.
    let astar0 = &ctx.astar_diag[0];
    push(
        "A*_0 = I",
        astar0.iter().map(|v| (v - 1.0).abs()).fold(0.0, f64::max),
    );
    let mut sum_err = 0.0_f64;
    for y in 0..n {
        let s: f64 = ctx.astar_diag.iter().map(|a| a[y]).sum();
        sum_err = sum_err.max((s - nf * es(0)[y]).abs());
    }
    push("sum A*_i = n E*_0", sum_err);
    let mut ww3 = 0.0_f64;
    for i in 0..=d as usize {
        for y in 0..n {
            let want = ctx.spectral.q(i, ctx.dist[y]);
            ww3 = ww3.max((ctx.astar_diag[i][y] - want).abs());
        }
    }
    push("A*_i = sum_j q_i(j) E*_j", ww3);
    if d > 0 {
        let mut eig = 0.0_f64;
        for y in 0..n {
            eig = eig.max((ctx.astar_diag[1][y] - ctx.spectral.theta_star[ctx.dist[y]]).abs());
        }
        push("A* E*_i = theta*_i E*_i", eig);
    }
    let mut ae = 0.0_f64;
    for i in 0..=d {
        let e = ctx.idempotent(i);
        ae = ae.max(max_diff(&(&ctx.a * &e), &(&e * ctx.spectral.theta[i as usize])));
    }
    push("A E_i = theta_i E_i", ae);

    // Raising, flat, lowering.
    let rfl = &ctx.raise + &ctx.flat + &ctx.lower;
    push("A = R + F + L", max_diff(&ctx.a, &rfl));
    push("R = L^t", max_diff(&ctx.raise, &ctx.lower.transpose()));
    push("F = F^t", max_diff(&ctx.flat, &ctx.flat.transpose()));
    let (mut r_hick, mut f_hick, mut l_hick) = (0.0_f64, 0.0_f64, 0.0_f64);
    for i in -1..=d {
        r_hick = r_hick.max(max_diff(
            &scale_cols(&ctx.raise, es(i)),
            &scale_rows(&ctx.raise, es(i + 1)),
        ));
    }
    for i in 0..=d {
        f_hick = f_hick.max(max_diff(
            &scale_cols(&ctx.flat, es(i)),
            &scale_rows(&ctx.flat, es(i)),
        ));
    }
    for i in 0..=d + 1 {
        l_hick = l_hick.max(max_diff(
            &scale_cols(&ctx.lower, es(i)),
            &scale_rows(&ctx.lower, es(i - 1)),
        ));
    }
    push("R E*_i = E*_{i+1} R", r_hick);
    push("F E*_i = E*_i F", f_hick);
    push("L E*_i = E*_{i-1} L", l_hick);

    // Dual raising, flat, lowering.
    let astar = ctx.astar();
    let rfl_star = &ctx.raise_star + &ctx.flat_star + &ctx.lower_star;
    push("A* = R* + F* + L*", max_diff(&astar, &rfl_star));
    push("R* = L*^t", max_diff(&ctx.raise_star, &ctx.lower_star.transpose()));
    push("F* = F*^t", max_diff(&ctx.flat_star, &ctx.flat_star.transpose()));
    let (mut rs, mut fs, mut ls) = (0.0_f64, 0.0_f64, 0.0_f64);
    for i in -1..=d {
        let (ei, ei1) = (ctx.idempotent(i), ctx.idempotent(i + 1));
        rs = rs.max(max_diff(&(&ctx.raise_star * &ei), &(&ei1 * &ctx.raise_star)));
    }
    for i in 0..=d {
        let ei = ctx.idempotent(i);
        fs = fs.max(max_diff(&(&ctx.flat_star * &ei), &(&ei * &ctx.flat_star)));
    }
    for i in 0..=d + 1 {
        let (ei, eim) = (ctx.idempotent(i), ctx.idempotent(i - 1));
        ls = ls.max(max_diff(&(&ctx.lower_star * &ei), &(&eim * &ctx.lower_star)));
    }
    push("R* E_i = E_{i+1} R*", rs);
    push("F* E_i = E_i F*", fs);
    push("L* E_i = E_{i-1} L*", ls);

    if ctx.is_almost_bipartite() {
        let mut flat_low = 0.0_f64;
        for i in 0..d {
            flat_low = flat_low.max(max_abs(&scale_rows(&scale_cols(&ctx.a, es(i)), es(i))));
        }
        push("E*_i A E*_i = 0 (i < D)", flat_low);
        let top = scale_rows(&scale_cols(&ctx.a, es(d)), es(d));
        push("F = E*_D A E*_D", max_diff(&ctx.flat, &top));
        let mut fe = 0.0_f64;
        for i in 0..d {
            fe = fe.max(max_abs(&scale_cols(&ctx.flat, es(i))));
        }
        push("F E*_i = 0 (i < D)", fe);
    }

    IdentityReport {
        base_vertex: ctx.base_vertex,
        checks,
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TriangleCounterexample {
    /// `"p"` for intersection numbers, `"q"` for Krein parameters.
    pub kind: &'static str,
    pub h: usize,
    pub i: usize,
    pub j: usize,
    pub parameter: f64,
    pub block_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct TriangleReport {
    pub checked: usize,
    pub counterexamples: Vec<TriangleCounterexample>,
}

/// Checks `p^h_ij = 0 <=> E*_i A_j E*_h = 0` and
/// `q^h_ij = 0 <=> E_i A*_j E_h = 0` for every triple.
pub fn triangle_vanishing_check(ctx: &TerwContext<'_>, tol: &Tolerances) -> TriangleReport {
    let n = ctx.n();
    let d = ctx.classes();
    let spectral = ctx.spectral;
    let tensor = ctx.scheme.tensor();
    let ord = &spectral.p_ordering;
    let mut counterexamples = Vec::new();
    let mut checked = 0;

    for h in 0..=d {
        for i in 0..=d {
            for j in 0..=d {
                checked += 1;
                let p = tensor.p(ord[h], ord[i], ord[j]);
                // Count entries of A_j in the (i, h) block.
                let mut count = 0u64;
                for y in 0..n {
                    if ctx.dist[y] != i {
                        continue;
                    }
                    for z in 0..n {
                        if ctx.dist[z] == h && spectral.class_index(ctx.scheme.relation(y, z)) == j {
                            count += 1;
                        }
                    }
                }
                if (p == 0) != (count == 0) {
                    counterexamples.push(TriangleCounterexample {
                        kind: "p",
                        h,
                        i,
                        j,
                        parameter: p as f64,
                        block_norm: (count as f64).sqrt(),
                    });
                }
            }
        }
    }

    // ||E_i A*_j E_h||_F = ||U_i^t A*_j E_h||_F with U_i an orthonormal basis
    // of E_i V; avoids both the n^3 product per triple and cancellation.
    let e = spectral.idempotents();
    let ranges: Vec<DMatrix<f64>> = e
        .iter()
        .map(|ei| {
            let (values, vectors) = symmetric_eigen_sorted(ei);
            let keep: Vec<usize> = (0..values.len()).filter(|&k| values[k] > 0.5).collect();
            DMatrix::from_fn(n, keep.len(), |y, c| vectors[(y, keep[c])])
        })
        .collect();
    let krein_scale = (0..=d)
        .flat_map(|h| (0..=d).flat_map(move |i| (0..=d).map(move |j| (h, i, j))))
        .fold(1.0_f64, |a, (h, i, j)| a.max(spectral.krein(h, i, j).abs()));
    for j in 0..=d {
        let a = &ctx.astar_diag[j];
        let a_scale = a.iter().fold(1.0_f64, |m, v| m.max(v.abs()));
        for (h, eh) in e.iter().enumerate() {
            let mut scaled = eh.clone();
            for (y, mut row) in scaled.row_iter_mut().enumerate() {
                row *= a[y];
            }
            for (i, range) in ranges.iter().enumerate() {
                checked += 1;
                let norm = (range.transpose() * &scaled).norm();
                let q = spectral.krein(h, i, j);
                let q_zero = q.abs() <= tol.krein_zero * krein_scale;
                let m_zero = norm <= tol.rank * a_scale;
                if q_zero != m_zero {
                    counterexamples.push(TriangleCounterexample {
                        kind: "q",
                        h,
                        i,
                        j,
                        parameter: q,
                        block_norm: norm,
                    });
                }
            }
        }
    }
    TriangleReport {
        checked,
        counterexamples,
    }
}
