//! Semidefinite program whose solutions are piecewise quadratic invariants.
//!
//! Decision variables, in canonical order: `alpha`, `beta`, then `(P^i, q^i)`
//! per cell, the cell multipliers `W^i`, the initial-condition multipliers
//! `Z^i` (intersecting cells only) and the switch multipliers `U^{ij}`
//! (fireable pairs, lexicographic). Symmetric matrix variables are stored as
//! their upper triangle, column by column. Multipliers are entrywise
//! nonnegative.
//!
//! Every constraint is an LMI block of size `1 + d + m`:
//!
//! * boundedness(i): `-E^iᵀ W^i E^i + [[-alpha, q^iᵀ], [q^i, P^i]] + [[beta, 0], [0, -I]]`
//! * init(i): `-[[-alpha, q^iᵀ], [q^i, P^i]] - E^{0i}ᵀ Z^i E^{0i}`
//! * invariance(i,j): `-F^iᵀ [[0, q^jᵀ], [q^j, P^j]] F^i + [[0, q^iᵀ], [q^i, P^i]] - E^{ij}ᵀ U^{ij} E^{ij}`
//!
//! The objective is `alpha + beta`. A margin `eps` is subtracted as `eps * I`
//! from every boundedness and init block when solving or exporting; block
//! constants are stored without it. Invariance blocks get no margin: if law
//! `i` has an equilibrium `x*` (for some input `u`) inside `X^{ij}`, then
//! `y = (1, x*, u)` satisfies `F^i y = y` and `E^{ij} y >= 0`, so
//! `yᵀ (invariance block) y = -yᵀ E^{ij}ᵀ U^{ij} E^{ij} y <= 0` for every
//! choice of variables. Such blocks are never positive definite and any
//! positive margin on them makes the program infeasible.

mod certificate;
mod sdpa;
mod solve;

use std::collections::BTreeMap;
use std::fmt;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::feas::SwitchGraph;
use crate::model::{ModelError, PwaSystem, QuadMatrix};

pub use certificate::{
    clamp_multipliers, extract_certificate, residuals, CellQuadratic, Certificate, Rejection,
    Residual, RESIDUAL_TOL,
};
pub use sdpa::{to_sdpa, write_sdpa};
pub use solve::{solve, Solution, SolveOptions, SolveStatus};

pub const DEFAULT_MARGIN: f64 = 1e-7;

pub const ALPHA: usize = 0;
pub const BETA: usize = 1;

#[derive(Debug, Error)]
pub enum SdpError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("switch graph covers {found} cells, system has {expected}")]
    GraphSize { expected: usize, found: usize },
    #[error("init mask covers {found} cells, system has {expected}")]
    InitMaskSize { expected: usize, found: usize },
    #[error("invariance block ({0},{1}) still depends on alpha")]
    AlphaNotCancelled(usize, usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BlockKind {
    Boundedness(usize),
    Init(usize),
    Invariance(usize, usize),
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BlockKind::Boundedness(i) => write!(f, "boundedness({i})"),
            BlockKind::Init(i) => write!(f, "init({i})"),
            BlockKind::Invariance(i, j) => write!(f, "invariance({i},{j})"),
        }
    }
}

/// A symmetric matrix variable occupying `size * (size + 1) / 2` scalars.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SymVar {
    pub offset: usize,
    pub size: usize,
}

impl SymVar {
    pub fn len(&self) -> usize {
        self.size * (self.size + 1) / 2
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    /// Scalar index of entry `(a, b)`, in either order.
    pub fn index(&self, a: usize, b: usize) -> usize {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        self.offset + b * (b + 1) / 2 + a
    }

    pub fn value(&self, x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_fn(self.size, self.size, |a, b| x[self.index(a, b)])
    }

    fn entries(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.size).flat_map(|b| (0..=b).map(move |a| (a, b)))
    }
}

struct Slots(usize);

impl Slots {
    fn sym(&mut self, size: usize) -> SymVar {
        let v = SymVar {
            offset: self.0,
            size,
        };
        self.0 += v.len();
        v
    }

    fn vector(&mut self, len: usize) -> usize {
        self.0 += len;
        self.0 - len
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarLayout {
    /// `d + m`
    pub dim: usize,
    pub p: Vec<SymVar>,
    pub q: Vec<usize>,
    pub w: Vec<SymVar>,
    pub z: Vec<Option<SymVar>>,
    pub u: BTreeMap<(usize, usize), SymVar>,
    multipliers_start: usize,
    total: usize,
}

impl VarLayout {
    fn new(sys: &PwaSystem, graph: &SwitchGraph, init_cells: &[bool]) -> Result<Self, ModelError> {
        let dim = sys.dim();
        let n = sys.n_cells();
        let mut next = Slots(2);
        let mut p = Vec::with_capacity(n);
        let mut q = Vec::with_capacity(n);
        for _ in 0..n {
            p.push(next.sym(dim));
            q.push(next.vector(dim));
        }
        let mut sym = |size| next.sym(size);
        let multipliers_start = sym(0).offset;
        let w = (0..n)
            .map(|i| Ok(sym(sys.cell_quadratization(i)?.rows())))
            .collect::<Result<Vec<_>, ModelError>>()?;
        let z = (0..n)
            .map(|i| {
                Ok(if init_cells[i] {
                    Some(sym(sys.init_quadratization(i)?.rows()))
                } else {
                    None
                })
            })
            .collect::<Result<Vec<_>, ModelError>>()?;
        let u = graph
            .pairs()
            .map(|(i, j)| Ok(((i, j), sym(sys.switch_quadratization(i, j)?.rows()))))
            .collect::<Result<BTreeMap<_, _>, ModelError>>()?;
        let total = sym(0).offset;
        Ok(Self {
            dim,
            p,
            q,
            w,
            z,
            u,
            multipliers_start,
            total,
        })
    }

    /// Layout with `n_vars` free scalars and no cell structure.
    #[cfg(test)]
    pub(crate) fn bare(n_vars: usize) -> Self {
        Self {
            dim: 0,
            p: Vec::new(),
            q: Vec::new(),
            w: Vec::new(),
            z: Vec::new(),
            u: BTreeMap::new(),
            multipliers_start: n_vars,
            total: n_vars,
        }
    }

    pub fn n_vars(&self) -> usize {
        self.total
    }

    /// Indices of the entrywise-nonnegative multiplier scalars.
    pub fn multipliers(&self) -> std::ops::Range<usize> {
        self.multipliers_start..self.total
    }

    pub fn p_value(&self, i: usize, x: &[f64]) -> DMatrix<f64> {
        self.p[i].value(x)
    }

    pub fn q_value(&self, i: usize, x: &[f64]) -> nalgebra::DVector<f64> {
        nalgebra::DVector::from_column_slice(&x[self.q[i]..self.q[i] + self.dim])
    }
}

/// Affine symmetric matrix expression `constant + sum_v x_v * coeff_v`.
#[derive(Debug, Clone, PartialEq)]
pub struct LmiBlock {
    pub kind: BlockKind,
    pub constant: DMatrix<f64>,
    /// Sorted by variable index, no zero matrices.
    pub terms: Vec<(usize, DMatrix<f64>)>,
}

impl LmiBlock {
    /// Whether the program margin applies to this block.
    pub fn takes_margin(&self) -> bool {
        !matches!(self.kind, BlockKind::Invariance(..))
    }

    pub fn size(&self) -> usize {
        self.constant.nrows()
    }

    /// Value at `x` without any margin.
    pub fn evaluate(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (v, c) in &self.terms {
            out += c * x[*v];
        }
        out
    }

    pub fn depends_on(&self, var: usize) -> bool {
        self.terms.iter().any(|(v, _)| *v == var)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConicProgram {
    pub layout: VarLayout,
    pub blocks: Vec<LmiBlock>,
    pub margin: f64,
}

impl ConicProgram {
    pub fn n_vars(&self) -> usize {
        self.layout.n_vars()
    }

    /// Objective coefficients: `alpha + beta`.
    pub fn objective(&self) -> Vec<f64> {
        let mut c = vec![0.0; self.n_vars()];
        c[ALPHA] = 1.0;
        c[BETA] = 1.0;
        c
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        x[ALPHA] + x[BETA]
    }

    /// Margin subtracted from block `k`.
    pub fn block_margin(&self, k: usize) -> f64 {
        if self.blocks[k].takes_margin() {
            self.margin
        } else {
            0.0
        }
    }

    /// Block `k` at `x`, margin included: the matrix the solver keeps PSD.
    pub fn block_matrix(&self, k: usize, x: &[f64]) -> DMatrix<f64> {
        let b = &self.blocks[k];
        b.evaluate(x) - DMatrix::identity(b.size(), b.size()) * self.block_margin(k)
    }

    pub fn with_margin(&self, margin: f64) -> Self {
        Self {
            margin,
            ..self.clone()
        }
    }

    pub fn count(&self, pred: impl Fn(&BlockKind) -> bool) -> usize {
        self.blocks.iter().filter(|b| pred(&b.kind)).count()
    }
}

/// Collects coefficient matrices per variable.
struct Expr {
    n: usize,
    constant: DMatrix<f64>,
    terms: BTreeMap<usize, DMatrix<f64>>,
}

impl Expr {
    fn new(n: usize) -> Self {
        Self {
            n,
            constant: DMatrix::zeros(n, n),
            terms: BTreeMap::new(),
        }
    }

    /// Adds `sign * x_var * Gᵀ (e_k e_lᵀ + e_l e_kᵀ) G` (once if `k == l`).
    fn add_entry(&mut self, var: usize, g: &DMatrix<f64>, k: usize, l: usize, sign: f64) {
        let gk = g.row(k);
        let gl = g.row(l);
        let mut c = gk.transpose() * gl;
        if k != l {
            c += gl.transpose() * gk;
        }
        let n = self.n;
        *self
            .terms
            .entry(var)
            .or_insert_with(|| DMatrix::zeros(n, n)) += c * sign;
    }

    /// Adds `sign * Gᵀ M G` for the symmetric variable `m` (rows of `g` index `m`).
    fn add_sym(&mut self, m: &SymVar, g: &DMatrix<f64>, sign: f64) {
        for (a, b) in m.entries() {
            self.add_entry(m.index(a, b), g, a, b, sign);
        }
    }

    /// Adds `sign * Gᵀ [[-alpha?, qᵀ], [q, P]] G` for cell `i`; `alpha`
    /// selects whether the top-left `-alpha` is present.
    fn add_cell(&mut self, layout: &VarLayout, i: usize, g: &DMatrix<f64>, sign: f64, alpha: bool) {
        if alpha {
            self.add_entry(ALPHA, g, 0, 0, -sign);
        }
        for k in 0..layout.dim {
            self.add_entry(layout.q[i] + k, g, 0, 1 + k, sign);
        }
        let p = layout.p[i];
        for (a, b) in p.entries() {
            self.add_entry(p.index(a, b), g, 1 + a, 1 + b, sign);
        }
    }

    fn finish(self, kind: BlockKind) -> LmiBlock {
        let terms = self
            .terms
            .into_iter()
            .filter(|(_, c)| c.iter().any(|&v| v != 0.0))
            .collect();
        LmiBlock {
            kind,
            constant: self.constant,
            terms,
        }
    }
}

fn multiplier_term(expr: &mut Expr, var: &SymVar, e: &QuadMatrix) {
    expr.add_sym(var, e.matrix(), -1.0);
}

pub fn assemble_boundedness_block(
    sys: &PwaSystem,
    layout: &VarLayout,
    i: usize,
) -> Result<LmiBlock, SdpError> {
    let n = layout.dim + 1;
    let id = DMatrix::identity(n, n);
    let mut expr = Expr::new(n);
    multiplier_term(&mut expr, &layout.w[i], &sys.cell_quadratization(i)?);
    expr.add_cell(layout, i, &id, 1.0, true);
    expr.add_entry(BETA, &id, 0, 0, 1.0);
    for k in 1..n {
        expr.constant[(k, k)] = -1.0;
    }
    Ok(expr.finish(BlockKind::Boundedness(i)))
}

pub fn assemble_init_block(
    sys: &PwaSystem,
    layout: &VarLayout,
    i: usize,
) -> Result<LmiBlock, SdpError> {
    let n = layout.dim + 1;
    let id = DMatrix::identity(n, n);
    let mut expr = Expr::new(n);
    expr.add_cell(layout, i, &id, -1.0, true);
    if let Some(z) = &layout.z[i] {
        multiplier_term(&mut expr, z, &sys.init_quadratization(i)?);
    }
    Ok(expr.finish(BlockKind::Init(i)))
}

/// Built with `-alpha` in both quadratic forms; the homogeneous law keeps
/// the leading coordinate, so alpha must cancel exactly.
pub fn assemble_invariance_block(
    sys: &PwaSystem,
    layout: &VarLayout,
    i: usize,
    j: usize,
) -> Result<LmiBlock, SdpError> {
    let n = layout.dim + 1;
    let id = DMatrix::identity(n, n);
    let f = sys.homogeneous_law(i)?.into_matrix();
    let mut expr = Expr::new(n);
    expr.add_cell(layout, j, &f, -1.0, true);
    expr.add_cell(layout, i, &id, 1.0, true);
    if let Some(u) = layout.u.get(&(i, j)) {
        multiplier_term(&mut expr, u, &sys.switch_quadratization(i, j)?);
    }
    if let Some(c) = expr.terms.remove(&ALPHA) {
        if c.iter().any(|&v| v != 0.0) {
            return Err(SdpError::AlphaNotCancelled(i, j));
        }
    }
    Ok(expr.finish(BlockKind::Invariance(i, j)))
}

/// Boundedness blocks for every cell, init blocks for cells flagged in
/// `init_cells`, invariance blocks for every fireable pair; in that order.
pub fn assemble_program(
    sys: &PwaSystem,
    graph: &SwitchGraph,
    init_cells: &[bool],
    margin: f64,
) -> Result<ConicProgram, SdpError> {
    let n = sys.n_cells();
    if graph.n_cells() != n {
        return Err(SdpError::GraphSize {
            expected: n,
            found: graph.n_cells(),
        });
    }
    if init_cells.len() != n {
        return Err(SdpError::InitMaskSize {
            expected: n,
            found: init_cells.len(),
        });
    }
    let layout = VarLayout::new(sys, graph, init_cells)?;
    let mut blocks = Vec::new();
    for i in 0..n {
        blocks.push(assemble_boundedness_block(sys, &layout, i)?);
    }
    for i in (0..n).filter(|&i| init_cells[i]) {
        blocks.push(assemble_init_block(sys, &layout, i)?);
    }
    for (i, j) in graph.pairs() {
        blocks.push(assemble_invariance_block(sys, &layout, i, j)?);
    }
    Ok(ConicProgram {
        layout,
        blocks,
        margin,
    })
}

fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    m.clone().symmetric_eigenvalues().min()
}

/// Smallest eigenvalue of the symmetric part of `m`.
pub fn min_eig(m: &DMatrix<f64>) -> f64 {
    min_eigenvalue(&((m + m.transpose()) * 0.5))
}

/// Sufficient condition for `(yᵀAy <= 0 and yᵀBy <= 0) => yᵀCy >= 0`:
/// `C + A + B` is positive semidefinite (up to `tol`).
pub fn implication_certified(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    c: &DMatrix<f64>,
    tol: f64,
) -> bool {
    min_eig(&(c + a + b)) >= -tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AffineLaw, Polyhedron};
    use nalgebra::DVector;

    fn one_cell_identity() -> PwaSystem {
        PwaSystem::new(
            1,
            0,
            vec![Polyhedron::universe(1)],
            vec![AffineLaw::new(
                DMatrix::identity(1, 1),
                DMatrix::zeros(1, 0),
                DVector::zeros(1),
            )
            .unwrap()],
            Polyhedron::universe(0),
            Polyhedron::boxed(&[(-1.0, 1.0)]),
        )
        .unwrap()
    }

    #[test]
    fn sym_var_indexing_is_dense() {
        let v = SymVar { offset: 5, size: 3 };
        let mut seen: Vec<usize> = v.entries().map(|(a, b)| v.index(a, b)).collect();
        seen.sort();
        assert_eq!(seen, (5..11).collect::<Vec<_>>());
        assert_eq!(v.index(2, 0), v.index(0, 2));
    }

    #[test]
    fn one_cell_self_loop_has_three_blocks() {
        let sys = one_cell_identity();
        let prog = assemble_program(&sys, &SwitchGraph::complete(1), &[true], 0.0).unwrap();
        assert_eq!(prog.blocks.len(), 3);
        let kinds: Vec<_> = prog.blocks.iter().map(|b| b.kind).collect();
        assert_eq!(
            kinds,
            vec![
                BlockKind::Boundedness(0),
                BlockKind::Init(0),
                BlockKind::Invariance(0, 0)
            ]
        );
    }

    #[test]
    fn identity_self_loop_cancels_without_multiplier() {
        let sys = one_cell_identity();
        let prog = assemble_program(&sys, &SwitchGraph::complete(1), &[true], 0.0).unwrap();
        let inv = &prog.blocks[2];
        let mut x = vec![0.7; prog.n_vars()];
        for k in prog.layout.u[&(0, 0)].offset..prog.n_vars() {
            x[k] = 0.0;
        }
        assert_eq!(inv.evaluate(&x).amax(), 0.0);
        assert!(!inv.depends_on(ALPHA));
    }

    #[test]
    fn trivial_blocks() {
        let sys = one_cell_identity();
        let prog = assemble_program(&sys, &SwitchGraph::complete(1), &[true], 0.0).unwrap();
        let mut x = vec![0.0; prog.n_vars()];
        x[ALPHA] = 2.5;
        x[BETA] = 4.0;
        // P = 0, q = 0, Z = 0: init block is diag(alpha, 0)
        let init = prog.blocks[1].evaluate(&x);
        assert_eq!(init, DMatrix::from_row_slice(2, 2, &[2.5, 0.0, 0.0, 0.0]));
        // P = I, alpha = 0, W = 0: boundedness block is diag(beta, 0)
        x[ALPHA] = 0.0;
        x[prog.layout.p[0].index(0, 0)] = 1.0;
        let bnd = prog.blocks[0].evaluate(&x);
        assert_eq!(bnd, DMatrix::from_row_slice(2, 2, &[4.0, 0.0, 0.0, 0.0]));
    }

    #[test]
    fn margin_shifts_bound_and_init_blocks_by_identity() {
        let sys = one_cell_identity();
        let prog = assemble_program(&sys, &SwitchGraph::complete(1), &[true], 0.0).unwrap();
        let shifted = prog.with_margin(0.25);
        // dyadic values keep the arithmetic exact
        let x: Vec<f64> = (0..prog.n_vars()).map(|k| k as f64 * 0.25 - 1.0).collect();
        for k in 0..prog.blocks.len() {
            let diff = prog.block_matrix(k, &x) - shifted.block_matrix(k, &x);
            let expected = if prog.blocks[k].takes_margin() {
                0.25
            } else {
                0.0
            };
            assert_eq!(diff, DMatrix::identity(2, 2) * expected);
        }
    }

    #[test]
    fn init_mask_drops_block() {
        let sys = one_cell_identity();
        let with = assemble_program(&sys, &SwitchGraph::complete(1), &[true], 0.0).unwrap();
        let without = assemble_program(&sys, &SwitchGraph::complete(1), &[false], 0.0).unwrap();
        assert_eq!(with.blocks.len(), without.blocks.len() + 1);
        assert_eq!(without.count(|k| matches!(k, BlockKind::Init(_))), 0);
    }

    #[test]
    fn implication_helper() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        let b = DMatrix::zeros(2, 2);
        let c = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        assert!(implication_certified(&a, &b, &c, 0.0));
        assert!(!implication_certified(
            &a,
            &b,
            &(c * 2.0 - DMatrix::identity(2, 2)),
            0.0
        ));
    }
}
