use std::fmt;

use serde::Serialize;
use thiserror::Error;

/// Which scheme axiom a relation table violates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Axiom {
    /// Every ordered pair carries exactly one class and every class is used.
    Partition,
    /// Class 0 is exactly the diagonal.
    Diagonal,
    /// Every class is symmetric.
    Symmetry,
    /// Intersection counts are constant on each class.
    Regularity,
}

impl fmt::Display for Axiom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Axiom::Partition => "(i) partition",
            Axiom::Diagonal => "(ii) diagonal",
            Axiom::Symmetry => "(iii) symmetry",
            Axiom::Regularity => "(iv) regularity",
        };
        f.write_str(s)
    }
}

/// Concrete evidence for an axiom violation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Witness {
    Pair { x: usize, y: usize },
    /// Two pairs in the same class `h` with different counts of `z` such that
    /// `(x, z)` is in class `i` and `(z, y)` in class `j`.
    Triple {
        h: usize,
        i: usize,
        j: usize,
        first: (usize, usize),
        second: (usize, usize),
        first_count: u64,
        second_count: u64,
    },
    EmptyClass { class: usize },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("axiom {axiom} violated: {witness:?}")]
    AxiomViolation { axiom: Axiom, witness: Witness },
    #[error("malformed input: {0}")]
    InvalidInput(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{what} needs {needed} vertices, over the cap of {cap}")]
    ResourceLimit {
        what: String,
        needed: u128,
        cap: usize,
    },
    #[error("scheme file could not be parsed: {0}")]
    Parse(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("scheme is not P-polynomial under any class ordering")]
    NotPPolynomial,
    #[error("eigenvalues {i} and {j} coincide within tolerance ({value})")]
    DegenerateSpectrum { i: usize, j: usize, value: f64 },
    #[error("spectrum check failed: {0}")]
    SpectrumMismatch(String),
    #[error("missing {0} ordering")]
    OrderingMissing(&'static str),
    #[error("vertex {vertex} out of range for a scheme on {n} vertices")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("module is not thin: dim E*_{index}W = {dim}")]
    NotThin { index: usize, dim: usize },
    #[error("decomposition unstable: {0}")]
    DecompositionUnstable(String),
    #[error("cell (t={t}, d={d}) is not in the index set for D={diameter}")]
    InvalidCell { t: usize, d: usize, diameter: usize },
    #[error("multiplicity at (t={t}, d={d}) is {value}, not an integer")]
    NonIntegerMultiplicity { t: usize, d: usize, value: f64 },
    #[error("multiplicity at (t={t}, d={d}) is negative ({value})")]
    NegativeMultiplicity { t: usize, d: usize, value: f64 },
    #[error("scheme is not an almost-bipartite P- and Q-polynomial scheme")]
    NotAlmostBipartite,
    #[error("beta = {beta} is degenerate (|beta -/+ 2| below tolerance)")]
    BetaDegenerate { beta: f64 },
    #[error("q,s fit failed: {0}")]
    FitFailure(String),
    #[error("scheme is an excluded family: {0}")]
    ExcludedFamily(String),
    #[error("no closed form for (t={t}, d={d}) with D={diameter}")]
    OutOfRange { t: usize, d: usize, diameter: usize },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
