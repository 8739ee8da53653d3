//! Numerical decomposition of the standard module into irreducible
//! T-modules, used as an independent oracle for the closed forms.
//!
//! Endpoints are processed in increasing order. At endpoint `r` the part of
//! `E*_r V` orthogonal to the modules found so far is diagonalised under a
//! random self-adjoint element of `E*_r T E*_r`; every eigenvector generates
//! one irreducible module, closed under `A` and `A*`. A module whose
//! `E*_r`-component is not one-dimensional signals an eigenvalue collision
//! and triggers a fresh draw.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::context::TerwContext;
use crate::error::{Error, Result};
use crate::linalg::{canonical_sign, orthonormal_column_basis_scaled, rank_relative, ser_matrix, symmetric_eigen_sorted};
use crate::tolerance::Tolerances;

/// Draws attempted per decomposition before giving up.
const MAX_DRAWS: usize = 8;
/// Offset between the seeds of the two cross-checked draws.
const SECOND_DRAW: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Clone, Serialize)]
pub struct IrreducibleModule {
    #[serde(skip)]
    pub basis: DMatrix<f64>,
    pub dim: usize,
    pub r: usize,
    pub t: usize,
    pub d: usize,
    pub dstar: usize,
    /// `dim E*_i W` for `i = 0..=D`.
    pub shell_dims: Vec<usize>,
    /// `dim E_i W` for `i = 0..=D`.
    pub dual_shell_dims: Vec<usize>,
    pub thin: bool,
    pub dual_thin: bool,
    #[serde(serialize_with = "ser_matrix")]
    pub measured_b: DMatrix<f64>,
    #[serde(serialize_with = "ser_matrix")]
    pub measured_bstar: DMatrix<f64>,
    /// Largest component of `A W` or `A* W` outside `W`.
    pub invariance_residual: f64,
    /// Largest deviation of a ladder image from the predicted multiple.
    pub measurement_residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct CensusEntry {
    pub t: usize,
    pub d: usize,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ModuleCensus {
    pub entries: Vec<CensusEntry>,
    pub total_dimension: usize,
}

impl ModuleCensus {
    pub fn from_modules(modules: &[IrreducibleModule]) -> Self {
        let mut counts: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        for m in modules {
            *counts.entry((m.t, m.d)).or_default() += 1;
        }
        Self {
            entries: counts
                .into_iter()
                .map(|((t, d), count)| CensusEntry { t, d, count })
                .collect(),
            total_dimension: modules.iter().map(|m| m.dim).sum(),
        }
    }

    pub fn count(&self, t: usize, d: usize) -> usize {
        self.entries
            .iter()
            .find(|e| e.t == t && e.d == d)
            .map_or(0, |e| e.count)
    }
}

fn mask(v: &DVector<f64>, dist: &[usize], i: usize) -> DVector<f64> {
    DVector::from_fn(v.len(), |y, _| if dist[y] == i { v[y] } else { 0.0 })
}

/// Subspace dimension of each `E*_i W`, from the row blocks of the basis.
fn shell_dims(ctx: &TerwContext<'_>, basis: &DMatrix<f64>, tol: &Tolerances) -> Vec<usize> {
    (0..=ctx.classes())
        .map(|i| {
            let rows = ctx.shell(i);
            let block = DMatrix::from_fn(rows.len(), basis.ncols(), |a, b| basis[(rows[a], b)]);
            rank_relative(&block, 1.0, tol.rank)
        })
        .collect()
}

fn dual_shell_dims(ctx: &TerwContext<'_>, basis: &DMatrix<f64>, tol: &Tolerances) -> Vec<usize> {
    (0..=ctx.classes())
        .map(|i| rank_relative(&(&ctx.idempotent(i as isize) * basis), 1.0, tol.rank))
        .collect()
}

fn support(dims: &[usize]) -> Option<(usize, usize)> {
    let lo = dims.iter().position(|&k| k > 0)?;
    let hi = dims.iter().rposition(|&k| k > 0)?;
    Some((lo, hi - lo))
}

fn project_out(v: &mut DVector<f64>, basis: &DMatrix<f64>) {
    for _ in 0..2 {
        if basis.ncols() > 0 {
            let coeffs = basis.transpose() * &*v;
            *v -= basis * coeffs;
        }
    }
}

/// Smallest subspace containing `v` and closed under `A` and `A*`. New
/// directions are judged against the operator norm, not the image norm,
/// since `A*` may nearly annihilate a vector.
fn closure(ctx: &TerwContext<'_>, v: &DVector<f64>, tol: &Tolerances) -> DMatrix<f64> {
    let astar = DVector::from_column_slice(&ctx.astar_diag[1.min(ctx.classes())]);
    let a_norm = ctx.spectral.theta.iter().fold(1.0_f64, |m, x| m.max(x.abs()));
    let astar_norm = astar.amax().max(1.0);
    let mut cols: Vec<DVector<f64>> = vec![v.normalize()];
    let mut frontier = 0;
    while frontier < cols.len() {
        let w = cols[frontier].clone();
        frontier += 1;
        for (mut img, scale) in [(&ctx.a * &w, a_norm), (w.component_mul(&astar), astar_norm)] {
            let current = DMatrix::from_columns(&cols);
            project_out(&mut img, &current);
            if img.norm() > tol.rank * scale {
                cols.push(img.normalize());
            }
        }
    }
    DMatrix::from_columns(&cols)
}

fn leakage(ctx: &TerwContext<'_>, basis: &DMatrix<f64>) -> f64 {
    let astar = DMatrix::from_diagonal(&DVector::from_column_slice(&ctx.astar_diag[1.min(ctx.classes())]));
    let proj = |m: DMatrix<f64>| {
        let inside = basis * (basis.transpose() * &m);
        (m - inside).amax()
    };
    proj(&ctx.a * basis).max(proj(&astar * basis))
}

/// Measures `B(W)` and `B*(W)` of a thin, dual-thin module.
pub fn measure_module(
    ctx: &TerwContext<'_>,
    module: &IrreducibleModule,
) -> Result<(DMatrix<f64>, DMatrix<f64>, f64)> {
    if let Some(index) = module.shell_dims.iter().position(|&k| k > 1) {
        return Err(Error::NotThin {
            index,
            dim: module.shell_dims[index],
        });
    }
    if let Some(index) = module.dual_shell_dims.iter().position(|&k| k > 1) {
        return Err(Error::NotThin {
            index,
            dim: module.dual_shell_dims[index],
        });
    }
    let (r, t, d) = (module.r, module.t, module.d);
    let q = &module.basis;

    // v spans E_t W; u_i = E*_{r+i} v.
    let v = unit_in(&(&ctx.idempotent(t as isize) * q));
    let u: Vec<DVector<f64>> = (0..=d).map(|i| mask(&v, &ctx.dist, r + i)).collect();
    let (b, res) = ladder(&ctx.raise, &ctx.flat, &ctx.lower, &u);

    // v* spans E*_r W; u*_i = E_{t+i} v*.
    let rows = DMatrix::from_fn(q.nrows(), q.ncols(), |y, k| if ctx.dist[y] == r { q[(y, k)] } else { 0.0 });
    let vs = unit_in(&rows);
    let us: Vec<DVector<f64>> = (0..=d)
        .map(|i| &ctx.idempotent((t + i) as isize) * &vs)
        .collect();
    let (bs, res_s) = ladder(&ctx.raise_star, &ctx.flat_star, &ctx.lower_star, &us);
    Ok((b, bs, res.max(res_s)))
}

/// Unit vector spanning the (one-dimensional) column space of `m`.
fn unit_in(m: &DMatrix<f64>) -> DVector<f64> {
    let best = (0..m.ncols())
        .max_by(|&a, &b| m.column(a).norm().total_cmp(&m.column(b).norm()))
        .unwrap_or(0);
    let mut v = m.column(best).normalize();
    canonical_sign(&mut v, 1e-10);
    v
}

/// Coefficients of `raise`, `flat` and `lower` on the ladder `u_0..u_d`, as
/// a tridiagonal matrix, with the largest off-ladder residual.
fn ladder(
    raise: &DMatrix<f64>,
    flat: &DMatrix<f64>,
    lower: &DMatrix<f64>,
    u: &[DVector<f64>],
) -> (DMatrix<f64>, f64) {
    let d = u.len() - 1;
    let mut m = DMatrix::zeros(d + 1, d + 1);
    let mut residual = 0.0_f64;
    let mut fit = |img: DVector<f64>, target: &DVector<f64>| {
        let coeff = img.dot(target) / target.norm_squared();
        residual = residual.max((img - target * coeff).amax());
        coeff
    };
    for i in 0..=d {
        if i > 0 {
            m[(i, i - 1)] = fit(raise * &u[i - 1], &u[i]);
        }
        m[(i, i)] = fit(flat * &u[i], &u[i]);
        if i < d {
            m[(i, i + 1)] = fit(lower * &u[i + 1], &u[i]);
        }
    }
    (m, residual)
}

fn assemble(ctx: &TerwContext<'_>, basis: DMatrix<f64>, tol: &Tolerances) -> IrreducibleModule {
    let shells = shell_dims(ctx, &basis, tol);
    let dual_shells = dual_shell_dims(ctx, &basis, tol);
    let (r, d) = support(&shells).unwrap_or((0, 0));
    let (t, dstar) = support(&dual_shells).unwrap_or((0, 0));
    let thin = shells.iter().all(|&k| k <= 1);
    let dual_thin = dual_shells.iter().all(|&k| k <= 1);
    let invariance_residual = leakage(ctx, &basis);
    let mut module = IrreducibleModule {
        dim: basis.ncols(),
        basis,
        r,
        t,
        d,
        dstar,
        shell_dims: shells,
        dual_shell_dims: dual_shells,
        thin,
        dual_thin,
        measured_b: DMatrix::zeros(0, 0),
        measured_bstar: DMatrix::zeros(0, 0),
        invariance_residual,
        measurement_residual: 0.0,
    };
    if thin && dual_thin && d == dstar {
        if let Ok((b, bs, res)) = measure_module(ctx, &module) {
            module.measured_b = b;
            module.measured_bstar = bs;
            module.measurement_residual = res;
        }
    }
    module
}

/// One random draw; `None` when an eigenvalue collision was detected.
fn decompose_once(ctx: &TerwContext<'_>, tol: &Tolerances, rng: &mut ChaCha8Rng) -> Option<Vec<IrreducibleModule>> {
    let n = ctx.n();
    let big_d = ctx.classes();
    let alpha: Vec<f64> = (0..=big_d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let beta: Vec<f64> = (0..=big_d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mut found = DMatrix::<f64>::zeros(n, 0);
    let mut modules = Vec::new();
    for r in 0..=big_d {
        let shell = ctx.shell(r);
        let mut cand = DMatrix::from_fn(n, shell.len(), |y, k| if y == shell[k] { 1.0 } else { 0.0 });
        if found.ncols() > 0 {
            cand -= &found * (found.transpose() * &cand);
        }
        for (y, mut row) in cand.row_iter_mut().enumerate() {
            if ctx.dist[y] != r {
                row.fill(0.0);
            }
        }
        // Columns start as unit vectors, so genuine directions have norm O(1).
        let c = orthonormal_column_basis_scaled(&cand, Some(1.0), tol.rank);
        if c.ncols() == 0 {
            continue;
        }
        // S = sum alpha_i C^t E_i C + sum beta_j (AC)^t E*_j (AC).
        let mut s = DMatrix::zeros(c.ncols(), c.ncols());
        for (i, a) in alpha.iter().enumerate() {
            let ec = &ctx.idempotent(i as isize) * &c;
            s += (c.transpose() * ec) * *a;
        }
        let ac = &ctx.a * &c;
        for (j, b) in beta.iter().enumerate() {
            let masked = DMatrix::from_fn(n, c.ncols(), |y, k| if ctx.dist[y] == j { ac[(y, k)] } else { 0.0 });
            s += (ac.transpose() * masked) * *b;
        }
        let s = (&s + s.transpose()) * 0.5;
        let (_, vecs) = symmetric_eigen_sorted(&s);
        for k in 0..vecs.ncols() {
            let mut v = &c * vecs.column(k);
            project_out(&mut v, &found);
            if v.norm() < 0.5 {
                return None;
            }
            let basis = closure(ctx, &v, tol);
            let module = assemble(ctx, basis, tol);
            if module.r != r || module.shell_dims[r] != 1 {
                return None;
            }
            found = DMatrix::from_columns(
                &found
                    .column_iter()
                    .map(|c| c.clone_owned())
                    .chain(module.basis.column_iter().map(|c| c.clone_owned()))
                    .collect::<Vec<_>>(),
            );
            modules.push(module);
        }
    }
    if found.ncols() != n {
        return None;
    }
    Some(modules)
}

fn decompose_seeded(ctx: &TerwContext<'_>, tol: &Tolerances, seed: u64) -> Result<Vec<IrreducibleModule>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_DRAWS {
        if let Some(mods) = decompose_once(ctx, tol, &mut rng) {
            return Ok(mods);
        }
    }
    Err(Error::DecompositionUnstable(format!(
        "no clean draw in {MAX_DRAWS} attempts (seed {seed})"
    )))
}

/// Decomposes the standard module. Two independent draws are made and
/// their censuses compared; the modules of the first draw are returned.
pub fn decompose(ctx: &TerwContext<'_>, tol: &Tolerances, seed: u64) -> Result<Vec<IrreducibleModule>> {
    let n = ctx.n();
    if n == 1 {
        let basis = DMatrix::from_element(1, 1, 1.0);
        return Ok(vec![assemble(ctx, basis, tol)]);
    }
    let first = decompose_seeded(ctx, tol, seed)?;
    let second = decompose_seeded(ctx, tol, seed.wrapping_add(SECOND_DRAW))?;
    let (a, b) = (ModuleCensus::from_modules(&first), ModuleCensus::from_modules(&second));
    if a != b {
        return Err(Error::DecompositionUnstable(format!(
            "censuses differ between draws: {:?} vs {:?}",
            a.entries, b.entries
        )));
    }
    Ok(first)
}

/// Largest `|<w_a, w_b>|` between bases of distinct modules.
pub fn orthogonality_residual(modules: &[IrreducibleModule]) -> f64 {
    let mut worst = 0.0_f64;
    for (i, a) in modules.iter().enumerate() {
        for b in &modules[i + 1..] {
            worst = worst.max((a.basis.transpose() * &b.basis).amax());
        }
    }
    worst
}

#[derive(Debug, Clone, Serialize)]
pub struct NormLadderReport {
    /// Largest `|c_i ||E*_{r+i} v||^2 - b_{i-1} ||E*_{r+i-1} v||^2|`.
    pub residual: f64,
    /// Same for the dual ladder.
    pub dual_residual: f64,
    /// `b_{i-1} c_i` and `b*_{i-1} c*_i` for `i = 1..=d`.
    pub products: Vec<f64>,
    pub dual_products: Vec<f64>,
    pub products_positive: bool,
}

/// Norm identities along both ladders, and positivity of the `2d` products.
pub fn norm_ladder_check(ctx: &TerwContext<'_>, module: &IrreducibleModule) -> NormLadderReport {
    let d = module.d;
    let (b, bs) = (&module.measured_b, &module.measured_bstar);
    if d == 0 || b.nrows() != d + 1 || bs.nrows() != d + 1 {
        return NormLadderReport {
            residual: 0.0,
            dual_residual: 0.0,
            products: Vec::new(),
            dual_products: Vec::new(),
            products_positive: d == 0,
        };
    }
    let q = &module.basis;
    let v = unit_in(&(&ctx.idempotent(module.t as isize) * q));
    let norms: Vec<f64> = (0..=d)
        .map(|i| mask(&v, &ctx.dist, module.r + i).norm_squared())
        .collect();
    let rows = DMatrix::from_fn(q.nrows(), q.ncols(), |y, k| if ctx.dist[y] == module.r { q[(y, k)] } else { 0.0 });
    let vs = unit_in(&rows);
    let dual_norms: Vec<f64> = (0..=d)
        .map(|i| (&ctx.idempotent((module.t + i) as isize) * &vs).norm_squared())
        .collect();
    let gap = |m: &DMatrix<f64>, w: &[f64]| {
        (1..=d).fold(0.0_f64, |a, i| a.max((m[(i, i - 1)] * w[i] - m[(i - 1, i)] * w[i - 1]).abs()))
    };
    let products: Vec<f64> = (1..=d).map(|i| b[(i - 1, i)] * b[(i, i - 1)]).collect();
    let dual_products: Vec<f64> = (1..=d).map(|i| bs[(i - 1, i)] * bs[(i, i - 1)]).collect();
    NormLadderReport {
        residual: gap(b, &norms),
        dual_residual: gap(bs, &dual_norms),
        products_positive: products.iter().chain(&dual_products).all(|&p| p > 0.0),
        products,
        dual_products,
    }
}
