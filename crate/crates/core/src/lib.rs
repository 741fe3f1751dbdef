//! Piecewise quadratic invariants for discrete-time piecewise affine systems.
//!
//! The pipeline takes a [`PwaSystem`] (cells, affine laws, an input polytope
//! and an initial polyhedron), prunes impossible cell switches with linear
//! programming, assembles a semidefinite program whose solution is a
//! piecewise quadratic function `V`, and returns a [`Certificate`]: a level
//! `alpha` whose sublevel set of `V` is an inductive invariant containing the
//! initial states, and a bound `beta` on the squared norm of every point of
//! that set.
//!
//! Module map:
//!
//! * [`model`]: polyhedra, affine laws, homogenization and the quadratization
//!   matrices of cells, switches and initial conditions.
//! * [`frontend`]: a small loop language that compiles to a [`PwaSystem`].
//! * [`feas`]: LP feasibility (dense simplex) and the alternative-system tests
//!   that decide fireable switches and initial-cell intersections.
//! * [`sdp`]: program assembly, the conic solver backend, SDPA export and
//!   certificate extraction.
//! * [`certify`]: sublevel membership, simulation and Monte-Carlo auditing.
//! * [`bench`]: random system generation and the batch harness.
//! * [`io`]: JSON interchange with canonical float formatting.

pub mod bench;
pub mod certify;
pub mod feas;
pub mod frontend;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod sdp;

// Link the system BLAS/LAPACK used by the PSD cone kernels.
extern crate openblas_src as _;

pub use certify::{AuditReport, InputPolicy, Trajectory};
pub use feas::{MotzkinCertificate, SwitchGraph};
pub use model::{AffineLaw, HomogeneousLaw, ModelError, Polyhedron, PwaSystem, QuadMatrix};
pub use pipeline::{analyze, AnalysisOutcome, AnalyzeOptions};
pub use sdp::{Certificate, ConicProgram, Solution, SolveStatus};
