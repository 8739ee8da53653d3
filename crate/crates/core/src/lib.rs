//! Terwilliger-algebra analysis of symmetric association schemes.
//!
//! The crate is organised bottom-up:
//!
//! - [`scheme`]: scheme axioms, exact intersection numbers, eigenmatrices,
//!   Krein parameters and P-/Q-polynomial orderings.
//! - [`generators`]: odd cycles, Odd graphs, folded cubes and the JSON
//!   scheme file format.
//! - [`context`]: the dual idempotents and the raising/flat/lowering
//!   operators at a fixed base vertex.
//! - [`decomposer`]: numerical decomposition of the standard module into
//!   irreducible modules, with per-module measurements.
//! - [`predictor`]: closed-form intersection matrices of irreducible modules
//!   of almost-bipartite P- and Q-polynomial schemes.
//! - [`multiplicity`]: the index set of module classes and the multiplicity
//!   recurrence.
//! - [`qs`]: the `q, s` parametrisation of the eigenvalue sequences.

pub mod context;
pub mod decomposer;
pub mod error;
pub mod generators;
pub mod linalg;
pub mod multiplicity;
pub mod predictor;
pub mod qs;
pub mod scheme;
pub mod tolerance;

pub use context::{IdentityCheck, IdentityReport, TerwContext, TriangleReport};
pub use error::{Error, Result};
pub use decomposer::{IrreducibleModule, ModuleCensus};
pub use generators::{Family, SchemeFile};
pub use multiplicity::{MultiplicityTable, Upsilon};
pub use predictor::{FeasibilityReport, ModuleClass};
pub use qs::{ExclusionReport, QsParams};
pub use scheme::{AssociationScheme, IntersectionTensor, PPolyArray, SchemeError, SpectralData};
pub use tolerance::Tolerances;
