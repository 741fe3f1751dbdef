//! LP-based feasibility questions about a [`PwaSystem`].
//!
//! A mixed strict/weak system `{y | E_s y >> 0, E_w y >= 0}` is empty exactly
//! when the alternative system
//!
//! ```text
//! E_s^T p_s + E_w^T p_w = 0,   sum(p_s) = 1,   p_s >= 0,   p_w >= 0
//! ```
//!
//! is feasible (Motzkin transposition). Every quadratization matrix carries
//! the constant row `(1, 0, ..., 0)` in its strict block, so homogeneous
//! solutions with a zero first coordinate are excluded and the test decides
//! emptiness of the underlying polyhedron.
//!
//! Numerical failures are always resolved in the sound direction: a switch
//! or an initial-cell intersection is kept unless a verified certificate
//! proves it impossible.

pub mod lp;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{cell_quadratization, ModelError, Polyhedron, PwaSystem, QuadMatrix};

pub use lp::{lp_feasible, minimize, LpOutcome, LpStatus, FEASIBILITY_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FeasError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("polyhedron is empty")]
    Empty,
    #[error("polyhedron is unbounded along coordinate {0}")]
    Unbounded(usize),
    #[error("LP solver could not decide coordinate {0} bounds")]
    Unknown(usize),
}

/// Nonnegative multipliers proving a strict/weak system infeasible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotzkinCertificate {
    pub p_strict: Vec<f64>,
    pub p_weak: Vec<f64>,
}

impl MotzkinCertificate {
    /// Largest violation among `E_s^T p_s + E_w^T p_w = 0`, `sum(p_s) = 1`
    /// and nonnegativity.
    pub fn residual(&self, e: &QuadMatrix) -> f64 {
        if self.p_strict.len() != e.n_strict() || self.p_weak.len() != e.n_weak() {
            return f64::INFINITY;
        }
        let ps = DVector::from_column_slice(&self.p_strict);
        let pw = DVector::from_column_slice(&self.p_weak);
        let combo = e.strict_block().transpose() * &ps + e.weak_block().transpose() * &pw;
        let sum_err = (ps.sum() - 1.0).abs();
        let neg = self
            .p_strict
            .iter()
            .chain(&self.p_weak)
            .fold(0.0f64, |acc, &v| acc.max(-v));
        combo.amax().max(sum_err).max(neg)
    }

    pub fn is_valid(&self, e: &QuadMatrix) -> bool {
        self.residual(e) <= FEASIBILITY_TOL
    }
}

/// Outcome of the alternative-system test.
#[derive(Debug, Clone, PartialEq)]
pub enum Alternative {
    /// The alternative is feasible: the strict/weak system is empty.
    Certificate(MotzkinCertificate),
    /// The alternative is infeasible: the strict/weak system has a solution.
    NoCertificate,
    Unknown,
}

impl Alternative {
    /// True unless emptiness is proven.
    pub fn maybe_nonempty(&self) -> bool {
        !matches!(self, Alternative::Certificate(_))
    }
}

pub fn motzkin_alternative(e: &QuadMatrix) -> Alternative {
    let (ns, nw) = (e.n_strict(), e.n_weak());
    let cols = e.cols();
    if ns == 0 {
        // Without strict rows the sum constraint alone is infeasible.
        return Alternative::NoCertificate;
    }
    let mut aeq = DMatrix::zeros(cols + 1, ns + nw);
    aeq.view_mut((0, 0), (cols, ns))
        .copy_from(&e.strict_block().transpose());
    aeq.view_mut((0, ns), (cols, nw))
        .copy_from(&e.weak_block().transpose());
    for k in 0..ns {
        aeq[(cols, k)] = 1.0;
    }
    let mut beq = DVector::zeros(cols + 1);
    beq[cols] = 1.0;
    match lp_feasible(&aeq, &beq, &vec![0.0; ns + nw]) {
        LpStatus::Feasible(p) => {
            let cert = MotzkinCertificate {
                p_strict: p.rows(0, ns).iter().copied().collect(),
                p_weak: p.rows(ns, nw).iter().copied().collect(),
            };
            if cert.is_valid(e) {
                Alternative::Certificate(cert)
            } else {
                log::warn!("Motzkin certificate failed re-check; treating as unknown");
                Alternative::Unknown
            }
        }
        LpStatus::Infeasible => Alternative::NoCertificate,
        LpStatus::Unknown => Alternative::Unknown,
    }
}

/// Alternative-system test for the switch `i -> j`.
pub fn switch_alternative(
    system: &PwaSystem,
    i: usize,
    j: usize,
) -> Result<Alternative, ModelError> {
    Ok(motzkin_alternative(&system.switch_quadratization(i, j)?))
}

/// Whether some point of cell `i` is mapped by law `i` into cell `j`.
/// Undecided LPs count as fireable.
pub fn switch_fireable(system: &PwaSystem, i: usize, j: usize) -> Result<bool, ModelError> {
    let alt = switch_alternative(system, i, j)?;
    if alt == Alternative::Unknown {
        log::warn!("switch {i}->{j}: LP undecided, keeping the switch");
    }
    Ok(alt.maybe_nonempty())
}

/// Boolean matrix of fireable switches, `fireable[i][j]` for `i -> j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SwitchGraph {
    fireable: Vec<Vec<bool>>,
}

impl SwitchGraph {
    pub fn from_matrix(fireable: Vec<Vec<bool>>) -> Self {
        assert!(
            fireable.iter().all(|r| r.len() == fireable.len()),
            "switch matrix must be square"
        );
        Self { fireable }
    }

    /// Every switch kept.
    pub fn complete(n: usize) -> Self {
        Self::from_matrix(vec![vec![true; n]; n])
    }

    pub fn n_cells(&self) -> usize {
        self.fireable.len()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.fireable[i][j]
    }

    pub fn rows(&self) -> &[Vec<bool>] {
        &self.fireable
    }

    /// Fireable pairs in lexicographic order.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.fireable.iter().enumerate().flat_map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, &f)| f)
                .map(move |(j, _)| (i, j))
        })
    }

    pub fn count(&self) -> usize {
        self.pairs().count()
    }
}

/// Runs the alternative test on every ordered pair of cells (concurrently;
/// the result does not depend on scheduling).
pub fn build_switch_graph(system: &PwaSystem) -> Result<SwitchGraph, ModelError> {
    let n = system.n_cells();
    let flat: Vec<bool> = (0..n * n)
        .into_par_iter()
        .map(|k| switch_fireable(system, k / n, k % n))
        .collect::<Result<_, _>>()?;
    Ok(SwitchGraph::from_matrix(
        flat.chunks(n).map(|c| c.to_vec()).collect(),
    ))
}

/// Whether the initial set meets cell `i`. Undecided LPs count as
/// intersecting.
pub fn init_intersects_cell(system: &PwaSystem, i: usize) -> Result<bool, ModelError> {
    let alt = motzkin_alternative(&system.init_quadratization(i)?);
    if alt == Alternative::Unknown {
        log::warn!("init/cell {i}: LP undecided, keeping the initial constraint");
    }
    Ok(alt.maybe_nonempty())
}

/// Pairs of cells `(i, j)`, `i < j`, that are not proven disjoint.
pub fn cells_disjoint(system: &PwaSystem) -> Result<Vec<(usize, usize)>, ModelError> {
    let n = system.n_cells();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let overlapping = pairs
        .into_par_iter()
        .map(|(i, j)| {
            let both = system.cell(i)?.intersect(system.cell(j)?)?;
            Ok((
                i,
                j,
                motzkin_alternative(&cell_quadratization(&both)).maybe_nonempty(),
            ))
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(overlapping
        .into_iter()
        .filter(|&(_, _, o)| o)
        .map(|(i, j, _)| (i, j))
        .collect())
}

/// Whether the polyhedron (strict rows included) has a point.
pub fn polyhedron_nonempty(p: &Polyhedron) -> bool {
    motzkin_alternative(&cell_quadratization(p)).maybe_nonempty()
}

/// Componentwise bounds of the closure of `p`, by one LP per coordinate and
/// direction.
pub fn bounding_box(p: &Polyhedron) -> Result<Vec<(f64, f64)>, FeasError> {
    let n = p.dim();
    let t = crate::model::vstack(p.strict_matrix(), p.weak_matrix());
    let mut c = DVector::zeros(p.n_strict() + p.n_weak());
    c.rows_mut(0, p.n_strict()).copy_from(p.strict_rhs());
    c.rows_mut(p.n_strict(), p.n_weak()).copy_from(p.weak_rhs());
    let rows = t.nrows();
    // [T I] (z, s) = c, z free, s >= 0
    let mut aeq = DMatrix::zeros(rows, n + rows);
    aeq.view_mut((0, 0), (rows, n)).copy_from(&t);
    aeq.view_mut((0, n), (rows, rows)).fill_with_identity();
    let mut lower = vec![f64::NEG_INFINITY; n];
    lower.extend(std::iter::repeat_n(0.0, rows));

    let mut bounds = Vec::with_capacity(n);
    for k in 0..n {
        let mut ends = [0.0; 2];
        for (slot, sign) in [(0, 1.0), (1, -1.0)] {
            let mut cost = DVector::zeros(n + rows);
            cost[k] = sign;
            ends[slot] = match minimize(&cost, &aeq, &c, &lower) {
                LpOutcome::Optimal { value, .. } => sign * value,
                LpOutcome::Infeasible => return Err(FeasError::Empty),
                LpOutcome::Unbounded => return Err(FeasError::Unbounded(k)),
                LpOutcome::Unknown => return Err(FeasError::Unknown(k)),
            };
        }
        bounds.push((ends[0], ends[1]));
    }
    Ok(bounds)
}

/// Bounds of the input polytope; fails if it is empty or unbounded.
pub fn input_bounds(system: &PwaSystem) -> Result<Vec<(f64, f64)>, FeasError> {
    let input = system.input_polytope();
    if !polyhedron_nonempty(input) {
        return Err(FeasError::Empty);
    }
    bounding_box(input)
}
