//! Symmetric association schemes and their classical parameters.
//!
//! Intersection numbers are exact integers obtained by direct triple
//! counting. Everything spectral (eigenmatrices, idempotents, Krein
//! parameters) is double precision.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Axiom, Error, Result, Witness};
use crate::linalg::{self, max_abs, max_diff};
use crate::tolerance::Tolerances;

pub type SchemeError = Error;

/// A class relabeling: `ordering[new] = old`. Position 0 is always 0.
pub type Ordering = Vec<usize>;

/// Exact intersection numbers `p[h][i][j]` and valencies `k[i]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct IntersectionTensor {
    classes: usize,
    p: Vec<u64>,
    k: Vec<u64>,
}

impl IntersectionTensor {
    fn from_flat(classes: usize, p: Vec<u64>) -> Self {
        let s = classes + 1;
        let k = (0..s).map(|i| p[i * s + i]).collect();
        Self { classes, p, k }
    }

    /// Number of non-identity classes `D`.
    pub fn classes(&self) -> usize {
        self.classes
    }

    /// `p^h_{ij}`.
    pub fn p(&self, h: usize, i: usize, j: usize) -> u64 {
        let s = self.classes + 1;
        self.p[(h * s + i) * s + j]
    }

    /// Valencies `k_i = p^0_{ii}`.
    pub fn valencies(&self) -> &[u64] {
        &self.k
    }

    /// The same tensor with classes relabeled by `ordering` (`ordering[new] = old`).
    pub fn relabeled(&self, ordering: &[usize]) -> Self {
        let s = self.classes + 1;
        let mut p = vec![0; s * s * s];
        for h in 0..s {
            for i in 0..s {
                for j in 0..s {
                    p[(h * s + i) * s + j] = self.p(ordering[h], ordering[i], ordering[j]);
                }
            }
        }
        Self::from_flat(self.classes, p)
    }
}

/// A validated symmetric association scheme on `n` vertices with `D` classes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssociationScheme {
    n: usize,
    classes: usize,
    relation: Vec<u32>,
    tensor: IntersectionTensor,
}

impl AssociationScheme {
    /// Validates every axiom exhaustively. `relation` is the row-major
    /// `n x n` class table.
    pub fn validate(n: usize, classes: usize, relation: Vec<usize>) -> Result<Self> {
        validate_scheme(n, classes, relation)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of non-identity classes `D`.
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn relation(&self, x: usize, y: usize) -> usize {
        self.relation[x * self.n + y] as usize
    }

    pub fn tensor(&self) -> &IntersectionTensor {
        &self.tensor
    }

    /// Row-major class table.
    pub fn relation_table(&self) -> Vec<usize> {
        self.relation.iter().map(|&c| c as usize).collect()
    }

    /// Vertices `y` with `relation(x, y) == class`.
    pub fn class_members(&self, x: usize, class: usize) -> Vec<usize> {
        (0..self.n).filter(|&y| self.relation(x, y) == class).collect()
    }

    /// The 0/1 associate matrix of `class`.
    pub fn associate_matrix(&self, class: usize) -> DMatrix<f64> {
        DMatrix::from_fn(self.n, self.n, |x, y| {
            if self.relation(x, y) == class {
                1.0
            } else {
                0.0
            }
        })
    }

    /// Multiplies the explicit 0/1 associate matrices pairwise and checks
    /// `A_i A_j = sum_h p^h_ij A_h` entry by entry in integer arithmetic.
    /// Returns the first failing `(i, j, x, y)` if any.
    pub fn verify_bose_mesner_closure(&self) -> std::result::Result<(), (usize, usize, usize, usize)> {
        let n = self.n;
        let s = self.classes + 1;
        // neighbours[c][x] = vertices in class c from x
        let neighbours: Vec<Vec<Vec<usize>>> = (0..s)
            .map(|c| (0..n).map(|x| self.class_members(x, c)).collect())
            .collect();
        let mut row = vec![0u64; n];
        for i in 0..s {
            for j in 0..s {
                for x in 0..n {
                    row.iter_mut().for_each(|v| *v = 0);
                    for &z in &neighbours[i][x] {
                        for &y in &neighbours[j][z] {
                            row[y] += 1;
                        }
                    }
                    for (y, &count) in row.iter().enumerate() {
                        if count != self.tensor.p(self.relation(x, y), i, j) {
                            return Err((i, j, x, y));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Sum of all associate matrices equals `J`; holds by construction of a
    /// partition but is checked from the matrices.
    pub fn associate_sum_is_all_ones(&self) -> bool {
        let mut sum = DMatrix::<f64>::zeros(self.n, self.n);
        for c in 0..=self.classes {
            sum += self.associate_matrix(c);
        }
        sum.iter().all(|&v| v == 1.0)
    }
}

/// Validates a raw class table against the four scheme axioms and computes
/// the intersection tensor as a by-product.
type FirstCounts = (Vec<u64>, (usize, usize));

pub fn validate_scheme(n: usize, classes: usize, relation: Vec<usize>) -> Result<AssociationScheme> {
    if n == 0 {
        return Err(Error::InvalidInput("a scheme needs at least one vertex".into()));
    }
    if relation.len() != n * n {
        return Err(Error::InvalidInput(format!(
            "relation table has {} entries, expected {}",
            relation.len(),
            n * n
        )));
    }
    let s = classes + 1;
    // (i) every pair lands in a class, and every class is used
    let mut used = vec![false; s];
    for x in 0..n {
        for y in 0..n {
            let c = relation[x * n + y];
            if c > classes {
                return Err(Error::AxiomViolation {
                    axiom: Axiom::Partition,
                    witness: Witness::Pair { x, y },
                });
            }
            used[c] = true;
        }
    }
    if let Some(class) = used.iter().position(|u| !u) {
        return Err(Error::AxiomViolation {
            axiom: Axiom::Partition,
            witness: Witness::EmptyClass { class },
        });
    }
    // (ii) class 0 is the diagonal
    for x in 0..n {
        for y in 0..n {
            if (relation[x * n + y] == 0) != (x == y) {
                return Err(Error::AxiomViolation {
                    axiom: Axiom::Diagonal,
                    witness: Witness::Pair { x, y },
                });
            }
        }
    }
    // (iii) symmetry
    for x in 0..n {
        for y in (x + 1)..n {
            if relation[x * n + y] != relation[y * n + x] {
                return Err(Error::AxiomViolation {
                    axiom: Axiom::Symmetry,
                    witness: Witness::Pair { x, y },
                });
            }
        }
    }
    // (iv) regularity, by exhaustive triple counting
    // Per class: the first pair seen and its triple counts.
    let mut p: Vec<Option<FirstCounts>> = vec![None; s];
    let mut counts = vec![0u64; s * s];
    for x in 0..n {
        for y in 0..n {
            counts.iter_mut().for_each(|c| *c = 0);
            for z in 0..n {
                counts[relation[x * n + z] * s + relation[z * n + y]] += 1;
            }
            let h = relation[x * n + y];
            match &p[h] {
                None => p[h] = Some((counts.clone(), (x, y))),
                Some((reference, first)) => {
                    if let Some(idx) = (0..s * s).find(|&idx| reference[idx] != counts[idx]) {
                        return Err(Error::AxiomViolation {
                            axiom: Axiom::Regularity,
                            witness: Witness::Triple {
                                h,
                                i: idx / s,
                                j: idx % s,
                                first: *first,
                                second: (x, y),
                                first_count: reference[idx],
                                second_count: counts[idx],
                            },
                        });
                    }
                }
            }
        }
    }
    let mut flat = Vec::with_capacity(s * s * s);
    for entry in p {
        let (row, _) = entry.expect("every class is non-empty");
        flat.extend(row);
    }
    Ok(AssociationScheme {
        n,
        classes,
        relation: relation.into_iter().map(|c| c as u32).collect(),
        tensor: IntersectionTensor::from_flat(classes, flat),
    })
}

/// The exact intersection tensor of a validated scheme.
pub fn intersection_tensor(scheme: &AssociationScheme) -> IntersectionTensor {
    scheme.tensor.clone()
}

fn tridiagonal_pattern_ok(classes: usize, nonzero: impl Fn(usize, usize, usize) -> bool) -> bool {
    for h in 0..=classes {
        for i in 0..=classes {
            for j in 0..=classes {
                let (a, b, c) = (h, i, j);
                let greater = a > b + c || b > a + c || c > a + b;
                let equal = a == b + c || b == a + c || c == a + b;
                let nz = nonzero(h, i, j);
                if greater && nz {
                    return false;
                }
                if equal && !nz {
                    return false;
                }
            }
        }
    }
    true
}

/// Checks the P-polynomial vanishing pattern under `ordering`.
pub fn is_p_polynomial_under(tensor: &IntersectionTensor, ordering: &[usize]) -> bool {
    tridiagonal_pattern_ok(tensor.classes, |h, i, j| {
        tensor.p(ordering[h], ordering[i], ordering[j]) != 0
    })
}

/// All class orderings under which the scheme is P-polynomial. For each
/// candidate first class `r`, the ordering is the distance ordering of the
/// graph of `R_r`; candidates are verified against the full pattern.
pub fn detect_p_polynomial(tensor: &IntersectionTensor) -> Vec<Ordering> {
    let d = tensor.classes;
    if d == 0 {
        return vec![vec![0]];
    }
    let mut found = Vec::new();
    for r in 1..=d {
        let mut ordering = vec![0, r];
        let mut used = vec![false; d + 1];
        used[0] = true;
        used[r] = true;
        while ordering.len() <= d {
            let last = *ordering.last().unwrap();
            let next: Vec<usize> = (0..=d)
                .filter(|&j| !used[j] && tensor.p(j, r, last) != 0)
                .collect();
            if next.len() != 1 {
                break;
            }
            used[next[0]] = true;
            ordering.push(next[0]);
        }
        if ordering.len() == d + 1 && is_p_polynomial_under(tensor, &ordering) {
            found.push(ordering);
        }
    }
    found
}

/// Intersection array `(c, a, b)` of a P-polynomial scheme.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PPolyArray {
    /// `c[0] = 0, c[1], ..., c[D]`.
    pub c: Vec<u64>,
    /// `a[0], ..., a[D]`.
    pub a: Vec<u64>,
    /// `b[0], ..., b[D-1], b[D] = 0`.
    pub b: Vec<u64>,
}

impl PPolyArray {
    /// Reads `c_i = p^i_{1,i-1}`, `a_i = p^i_{1,i}`, `b_i = p^i_{1,i+1}` under `ordering`.
    pub fn from_tensor(tensor: &IntersectionTensor, ordering: &[usize]) -> Result<Self> {
        if !is_p_polynomial_under(tensor, ordering) {
            return Err(Error::NotPPolynomial);
        }
        let d = tensor.classes;
        let p = |h: usize, i: usize, j: usize| tensor.p(ordering[h], ordering[i], ordering[j]);
        let c = (0..=d).map(|i| if i == 0 { 0 } else { p(i, 1, i - 1) }).collect();
        let a = (0..=d).map(|i| if d == 0 { 0 } else { p(i, 1, i) }).collect();
        let b = (0..=d).map(|i| if i == d { 0 } else { p(i, 1, i + 1) }).collect();
        Ok(Self { c, a, b })
    }

    pub fn diameter(&self) -> usize {
        self.a.len() - 1
    }

    /// Valency `k = b_0` (0 for the one-class scheme).
    pub fn valency(&self) -> u64 {
        self.b[0]
    }

    /// `k_i = b_0 ... b_{i-1} / (c_1 ... c_i)`, exact. `None` if a quotient is
    /// not integral.
    pub fn valencies_from_products(&self) -> Option<Vec<u64>> {
        let mut out = vec![1u64];
        let (mut num, mut den) = (1u128, 1u128);
        for i in 1..=self.diameter() {
            num *= self.b[i - 1] as u128;
            den *= self.c[i] as u128;
            if den == 0 || num % den != 0 {
                return None;
            }
            out.push((num / den) as u64);
        }
        Some(out)
    }

    /// `a_0 = ... = a_{D-1} = 0` and `a_D != 0`.
    pub fn is_almost_bipartite(&self) -> bool {
        is_almost_bipartite(self)
    }
}

/// `a_0 = ... = a_{D-1} = 0` and `a_D != 0`.
pub fn is_almost_bipartite(pp: &PPolyArray) -> bool {
    let d = pp.diameter();
    pp.a[..d].iter().all(|&a| a == 0) && pp.a[d] != 0
}

/// Options for the Q-polynomial ordering search.
#[derive(Debug, Clone, Copy)]
pub struct QSearch {
    /// Fall back to trying every permutation when the greedy search finds
    /// nothing and `D <= 8`.
    pub exhaustive_fallback: bool,
}

impl Default for QSearch {
    fn default() -> Self {
        Self {
            exhaustive_fallback: true,
        }
    }
}

/// Eigenvalues, dual eigenvalues, multiplicities, idempotents and Krein
/// parameters. Classes are indexed in the P-polynomial order; idempotents in
/// the Q-polynomial order when one exists, otherwise by decreasing eigenvalue.
#[derive(Debug, Clone)]
pub struct SpectralData {
    classes: usize,
    n: usize,
    /// `p_ordering[new] = old` scheme class.
    pub p_ordering: Ordering,
    p_rank: Vec<usize>,
    /// Permutation applied to the decreasing-eigenvalue order of the
    /// idempotents (`q_ordering[new] = old`), if the scheme is Q-polynomial.
    pub q_ordering: Option<Ordering>,
    pub pp: PPolyArray,
    /// `eig_p[(j, i)] = p_i(j)`.
    pub eig_p: DMatrix<f64>,
    /// `eig_q[(i, j)] = q_j(i)`.
    pub eig_q: DMatrix<f64>,
    /// Multiplicities `m_j`.
    pub m: Vec<f64>,
    /// `theta[j] = p_1(j)`.
    pub theta: Vec<f64>,
    /// `theta_star[i] = q_1(i)`; meaningful under the Q-ordering.
    pub theta_star: Vec<f64>,
    krein: Vec<f64>,
    idempotents: Vec<DMatrix<f64>>,
}

impl SpectralData {
    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// `p_i(j)`: eigenvalue of `A_i` on `E_j`.
    pub fn p(&self, i: usize, j: usize) -> f64 {
        self.eig_p[(j, i)]
    }

    /// `q_i(j)`: dual eigenvalue of `E_i` at class `j`.
    pub fn q(&self, i: usize, j: usize) -> f64 {
        self.eig_q[(j, i)]
    }

    /// Krein parameter `q^h_{ij}`.
    pub fn krein(&self, h: usize, i: usize, j: usize) -> f64 {
        let s = self.classes + 1;
        self.krein[(h * s + i) * s + j]
    }

    /// `E_i`, or `None` outside `0..=D` (the zero matrix by convention).
    pub fn idempotent(&self, i: isize) -> Option<&DMatrix<f64>> {
        if i < 0 {
            return None;
        }
        self.idempotents.get(i as usize)
    }

    pub fn idempotents(&self) -> &[DMatrix<f64>] {
        &self.idempotents
    }

    /// Position of scheme class `old` in the P-polynomial order.
    pub fn class_index(&self, old: usize) -> usize {
        self.p_rank[old]
    }

    pub fn is_q_polynomial(&self) -> bool {
        self.q_ordering.is_some()
    }

    /// Dual intersection numbers `(c*, a*, b*)` read from the Krein
    /// parameters: `c*_i = q^i_{1,i-1}`, `a*_i = q^i_{1,i}`, `b*_i = q^i_{1,i+1}`.
    pub fn dual_array(&self) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let d = self.classes;
        let c = (0..=d).map(|i| if i == 0 { 0.0 } else { self.krein(i, 1, i - 1) }).collect();
        let a = (0..=d).map(|i| if d == 0 { 0.0 } else { self.krein(i, 1, i) }).collect();
        let b = (0..=d).map(|i| if i == d { 0.0 } else { self.krein(i, 1, i + 1) }).collect();
        (c, a, b)
    }

    /// Residuals of the defining identities, as `(name, residual)`.
    pub fn invariant_residuals(&self, scheme: &AssociationScheme) -> Vec<(String, f64)> {
        let n = self.n;
        let s = self.classes + 1;
        let nf = n as f64;
        let mut out = Vec::new();
        let mut idem = 0.0_f64;
        for i in 0..s {
            for j in 0..s {
                let prod = &self.idempotents[i] * &self.idempotents[j];
                let want = if i == j {
                    self.idempotents[i].clone()
                } else {
                    DMatrix::zeros(n, n)
                };
                idem = idem.max(max_diff(&prod, &want));
            }
        }
        out.push(("E_i E_j = delta_ij E_i".into(), idem));
        let mut sum = DMatrix::zeros(n, n);
        for e in &self.idempotents {
            sum += e;
        }
        out.push(("sum E_i = I".into(), max_diff(&sum, &DMatrix::identity(n, n))));
        out.push((
            "E_0 = J / n".into(),
            max_diff(&self.idempotents[0], &DMatrix::from_element(n, n, 1.0 / nf)),
        ));
        let assoc: Vec<DMatrix<f64>> = (0..s)
            .map(|i| scheme.associate_matrix(self.p_ordering[i]))
            .collect();
        let mut eq1 = 0.0_f64;
        let mut eq2 = 0.0_f64;
        for i in 0..s {
            let mut a = DMatrix::zeros(n, n);
            let mut e = DMatrix::zeros(n, n);
            for (j, aj) in assoc.iter().enumerate() {
                a += &self.idempotents[j] * self.p(i, j);
                e += aj * (self.q(i, j) / nf);
            }
            eq1 = eq1.max(max_diff(&a, &assoc[i]));
            eq2 = eq2.max(max_diff(&e, &self.idempotents[i]));
        }
        out.push(("A_i = sum_j p_i(j) E_j".into(), eq1));
        out.push(("E_i = n^-1 sum_j q_i(j) A_j".into(), eq2));
        let k = scheme.tensor().valencies();
        let mut ratio = 0.0_f64;
        for i in 0..s {
            for j in 0..s {
                let kk = k[self.p_ordering[i]] as f64;
                ratio = ratio.max((self.p(i, j) / kk - self.q(j, i) / self.m[j]).abs());
            }
        }
        out.push(("p_i(j)/k_i = q_j(i)/m_j".into(), ratio));
        let pq = &self.eig_p * &self.eig_q;
        out.push((
            "PQ = nI (relative)".into(),
            max_diff(&pq, &(DMatrix::identity(s, s) * nf)) / nf,
        ));
        let mut k0 = 0.0_f64;
        for i in 0..s {
            for j in 0..s {
                let want = if i == j { self.m[i] } else { 0.0 };
                k0 = k0.max((self.krein(0, i, j) - want).abs());
            }
        }
        out.push(("q^0_ij = delta_ij m_i".into(), k0));
        out
    }
}

/// Computes the spectral data of a P-polynomial scheme, detecting the
/// P-ordering (the first one found) and, if present, a Q-ordering.
pub fn spectral_data(scheme: &AssociationScheme, tol: &Tolerances) -> Result<SpectralData> {
    spectral_data_with(scheme, tol, QSearch::default())
}

pub fn spectral_data_with(
    scheme: &AssociationScheme,
    tol: &Tolerances,
    search: QSearch,
) -> Result<SpectralData> {
    let tensor = scheme.tensor();
    let p_ordering = detect_p_polynomial(tensor)
        .into_iter()
        .next()
        .ok_or(Error::NotPPolynomial)?;
    let pp = PPolyArray::from_tensor(tensor, &p_ordering)?;
    let d = tensor.classes();
    let s = d + 1;
    let n = scheme.n();
    let nf = n as f64;
    let mut p_rank = vec![0; s];
    for (new, &old) in p_ordering.iter().enumerate() {
        p_rank[old] = new;
    }

    // Eigenvalues of the tridiagonal intersection matrix, decreasing.
    let lower: Vec<f64> = (1..=d).map(|i| pp.c[i] as f64).collect();
    let upper: Vec<f64> = (0..d).map(|i| pp.b[i] as f64).collect();
    let diag: Vec<f64> = pp.a.iter().map(|&a| a as f64).collect();
    let mut theta = linalg::tridiagonal_eigenvalues(&lower, &diag, &upper);
    theta.reverse();
    check_distinct(&theta, tol)?;

    // Eigenmatrix by the three-term recurrence: p_i(j) = v_i(theta_j).
    let mut eig_p = DMatrix::zeros(s, s);
    for (j, &th) in theta.iter().enumerate() {
        let mut prev = 0.0;
        let mut cur = 1.0;
        eig_p[(j, 0)] = 1.0;
        for i in 0..d {
            let b_prev = if i == 0 { 0.0 } else { pp.b[i - 1] as f64 };
            let next = ((th - pp.a[i] as f64) * cur - b_prev * prev) / pp.c[i + 1] as f64;
            prev = cur;
            cur = next;
            eig_p[(j, i + 1)] = cur;
        }
    }
    let k: Vec<f64> = (0..s)
        .map(|i| tensor.valencies()[p_ordering[i]] as f64)
        .collect();
    let m: Vec<f64> = (0..s)
        .map(|j| nf / (0..s).map(|i| eig_p[(j, i)].powi(2) / k[i]).sum::<f64>())
        .collect();
    let eig_q = DMatrix::from_fn(s, s, |i, j| m[j] * eig_p[(j, i)] / k[i]);

    // Cross-validate against the adjacency spectrum.
    let a1 = if d == 0 {
        DMatrix::zeros(n, n)
    } else {
        scheme.associate_matrix(p_ordering[1])
    };
    cross_validate_adjacency(&a1, &theta, &m, tol)?;

    // Lagrange projectors E_j = prod_{l != j} (A - theta_l I) / (theta_j - theta_l).
    let idempotents: Vec<DMatrix<f64>> = (0..s)
        .map(|j| {
            let mut e = DMatrix::identity(n, n);
            for l in 0..s {
                if l == j {
                    continue;
                }
                let mut f = a1.clone();
                for x in 0..n {
                    f[(x, x)] -= theta[l];
                }
                e = (e * f) / (theta[j] - theta[l]);
            }
            e
        })
        .collect();

    let krein = krein_from_idempotents(&idempotents, &m, n);
    let mut data = SpectralData {
        classes: d,
        n,
        p_ordering,
        p_rank,
        q_ordering: None,
        pp,
        eig_p,
        eig_q,
        m,
        theta: theta.clone(),
        theta_star: Vec::new(),
        krein,
        idempotents,
    };
    if let Some(order) = detect_q_polynomial_with(&data, tol, search).into_iter().next() {
        data = data.reorder_idempotents(&order);
        data.q_ordering = Some(order);
    }
    data.theta_star = (0..s).map(|i| data.q(1.min(d), i)).collect();
    check_distinct_star(&data, tol)?;
    Ok(data)
}

fn check_distinct(theta: &[f64], tol: &Tolerances) -> Result<()> {
    for i in 0..theta.len() {
        for j in (i + 1)..theta.len() {
            if (theta[i] - theta[j]).abs() < tol.spectrum * (1.0 + theta[i].abs()) {
                return Err(Error::DegenerateSpectrum {
                    i,
                    j,
                    value: theta[i],
                });
            }
        }
    }
    Ok(())
}

fn check_distinct_star(data: &SpectralData, tol: &Tolerances) -> Result<()> {
    if data.q_ordering.is_some() {
        check_distinct(&data.theta_star, tol)?;
    }
    Ok(())
}

fn cross_validate_adjacency(a1: &DMatrix<f64>, theta: &[f64], m: &[f64], tol: &Tolerances) -> Result<()> {
    let values = a1.clone().symmetric_eigenvalues();
    let mut counts = vec![0usize; theta.len()];
    for &v in values.iter() {
        let slot = theta
            .iter()
            .position(|&t| (t - v).abs() < tol.spectrum * (1.0 + t.abs()) * 1e2);
        match slot {
            Some(j) => counts[j] += 1,
            None => {
                return Err(Error::SpectrumMismatch(format!(
                    "adjacency eigenvalue {v} matches no root of the intersection matrix"
                )))
            }
        }
    }
    for (j, (&count, &mj)) in counts.iter().zip(m).enumerate() {
        if (count as f64 - mj).abs() > 1e-6 {
            return Err(Error::SpectrumMismatch(format!(
                "theta_{j} has adjacency multiplicity {count}, column orthogonality gives {mj}"
            )));
        }
    }
    Ok(())
}

/// `q^h_ij` from the expansion `E_i o E_j = n^-1 sum_h q^h_ij E_h`: the
/// coefficient of `E_h` is `trace((E_i o E_j) E_h) / m_h`.
fn krein_from_idempotents(e: &[DMatrix<f64>], m: &[f64], n: usize) -> Vec<f64> {
    let s = e.len();
    let nf = n as f64;
    let mut out = vec![0.0; s * s * s];
    for i in 0..s {
        for j in i..s {
            let had = e[i].component_mul(&e[j]);
            for h in 0..s {
                // E_h symmetric: trace(M E_h) = sum_xy M_xy (E_h)_xy
                let tr = had.dot(&e[h]);
                let v = nf * tr / m[h];
                out[(h * s + i) * s + j] = v;
                out[(h * s + j) * s + i] = v;
            }
        }
    }
    out
}

impl SpectralData {
    fn reorder_idempotents(&self, order: &[usize]) -> SpectralData {
        let s = self.classes + 1;
        let eig_p = DMatrix::from_fn(s, s, |j, i| self.eig_p[(order[j], i)]);
        let eig_q = DMatrix::from_fn(s, s, |i, j| self.eig_q[(i, order[j])]);
        let mut krein = vec![0.0; s * s * s];
        for h in 0..s {
            for i in 0..s {
                for j in 0..s {
                    krein[(h * s + i) * s + j] = self.krein(order[h], order[i], order[j]);
                }
            }
        }
        SpectralData {
            classes: self.classes,
            n: self.n,
            p_ordering: self.p_ordering.clone(),
            p_rank: self.p_rank.clone(),
            q_ordering: self.q_ordering.clone(),
            pp: self.pp.clone(),
            eig_p,
            eig_q,
            m: order.iter().map(|&j| self.m[j]).collect(),
            theta: order.iter().map(|&j| self.theta[j]).collect(),
            theta_star: Vec::new(),
            krein,
            idempotents: order.iter().map(|&j| self.idempotents[j].clone()).collect(),
        }
    }

    fn krein_scale(&self) -> f64 {
        self.krein.iter().fold(0.0_f64, |a, x| a.max(x.abs())).max(1.0)
    }
}

/// Checks the Q-polynomial vanishing pattern of the Krein parameters under
/// `ordering` (relative to the current idempotent indexing).
pub fn is_q_polynomial_under(spectral: &SpectralData, ordering: &[usize], tol: &Tolerances) -> bool {
    let zero = tol.krein_zero * spectral.krein_scale();
    tridiagonal_pattern_ok(spectral.classes, |h, i, j| {
        spectral.krein(ordering[h], ordering[i], ordering[j]).abs() > zero
    })
}

/// All idempotent orderings (relative to the current indexing) under which
/// the scheme is Q-polynomial, found greedily; see [`QSearch`].
pub fn detect_q_polynomial(spectral: &SpectralData, tol: &Tolerances) -> Vec<Ordering> {
    detect_q_polynomial_with(spectral, tol, QSearch::default())
}

pub fn detect_q_polynomial_with(spectral: &SpectralData, tol: &Tolerances, search: QSearch) -> Vec<Ordering> {
    let d = spectral.classes;
    if d == 0 {
        return vec![vec![0]];
    }
    let zero = tol.krein_zero * spectral.krein_scale();
    let mut found = Vec::new();
    for first in 1..=d {
        let mut ordering = vec![0, first];
        let mut used = vec![false; d + 1];
        used[0] = true;
        used[first] = true;
        while ordering.len() <= d {
            let last = *ordering.last().unwrap();
            let next: Vec<usize> = (0..=d)
                .filter(|&j| !used[j] && spectral.krein(j, first, last).abs() > zero)
                .collect();
            if next.len() != 1 {
                break;
            }
            used[next[0]] = true;
            ordering.push(next[0]);
        }
        if ordering.len() == d + 1 && is_q_polynomial_under(spectral, &ordering, tol) {
            found.push(ordering);
        }
    }
    if found.is_empty() && search.exhaustive_fallback && d <= 8 {
        let mut rest: Vec<usize> = (1..=d).collect();
        permutations(&mut rest, 0, &mut |perm| {
            let mut ordering = vec![0];
            ordering.extend_from_slice(perm);
            if is_q_polynomial_under(spectral, &ordering, tol) {
                found.push(ordering);
            }
        });
    }
    found
}

fn permutations(items: &mut Vec<usize>, start: usize, visit: &mut dyn FnMut(&[usize])) {
    if start == items.len() {
        visit(items);
        return;
    }
    for i in start..items.len() {
        items.swap(start, i);
        permutations(items, start + 1, visit);
        items.swap(start, i);
    }
}

/// Max-norm of the Krein residual `E_i o E_j - n^-1 sum_h q^h_ij E_h` over
/// all pairs; independent of how the parameters were obtained.
pub fn krein_expansion_residual(spectral: &SpectralData) -> f64 {
    let s = spectral.classes + 1;
    let nf = spectral.n as f64;
    let mut worst = 0.0_f64;
    for i in 0..s {
        for j in 0..s {
            let had = spectral.idempotents[i].component_mul(&spectral.idempotents[j]);
            let mut rhs = DMatrix::zeros(spectral.n, spectral.n);
            for h in 0..s {
                rhs += &spectral.idempotents[h] * (spectral.krein(h, i, j) / nf);
            }
            worst = worst.max(max_abs(&(had - rhs)));
        }
    }
    worst
}
