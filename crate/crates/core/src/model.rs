//! Core data model: polyhedral cells, affine laws, systems and the
//! quadratization matrices built from them.
//!
//! Points of the state-input space are `z = (x, u)` with `x` in `R^d` and
//! `u` in `R^m`. Homogeneous coordinates prepend a constant: `(1, x, u)`.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    Dimension {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error(
        "system needs at least one cell, with one law per cell (cells: {cells}, laws: {laws})"
    )]
    CellLawCount { cells: usize, laws: usize },
    #[error("cell index {index} out of range ({count} cells)")]
    CellIndex { index: usize, count: usize },
    #[error("partition violation: point lies in cells {cells:?}")]
    PartitionViolation { cells: Vec<usize> },
}

fn check_dim(what: &str, expected: usize, found: usize) -> Result<(), ModelError> {
    if expected == found {
        Ok(())
    } else {
        Err(ModelError::Dimension {
            what: what.to_string(),
            expected,
            found,
        })
    }
}

/// Prepends the homogenizing constant: `(1, z)`.
pub fn homogeneous_point(z: &DVector<f64>) -> DVector<f64> {
    let mut y = DVector::zeros(z.len() + 1);
    y[0] = 1.0;
    y.rows_mut(1, z.len()).copy_from(z);
    y
}

/// Concatenates a state and an input vector.
pub fn join_state_input(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    let mut z = DVector::zeros(x.len() + u.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), u.len()).copy_from(u);
    z
}

/// Convex polyhedron `{z | Ts z << cs, Tw z <= cw}` with separate strict and
/// weak blocks. Either block may have zero rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Polyhedron {
    ts: DMatrix<f64>,
    cs: DVector<f64>,
    tw: DMatrix<f64>,
    cw: DVector<f64>,
}

impl Polyhedron {
    pub fn new(
        ts: DMatrix<f64>,
        cs: DVector<f64>,
        tw: DMatrix<f64>,
        cw: DVector<f64>,
    ) -> Result<Self, ModelError> {
        check_dim("strict/weak column count", ts.ncols(), tw.ncols())?;
        check_dim("strict right-hand side", ts.nrows(), cs.len())?;
        check_dim("weak right-hand side", tw.nrows(), cw.len())?;
        Ok(Self { ts, cs, tw, cw })
    }

    /// The whole space `R^dim`.
    pub fn universe(dim: usize) -> Self {
        Self {
            ts: DMatrix::zeros(0, dim),
            cs: DVector::zeros(0),
            tw: DMatrix::zeros(0, dim),
            cw: DVector::zeros(0),
        }
    }

    /// Polyhedron described by weak rows only.
    pub fn weak(tw: DMatrix<f64>, cw: DVector<f64>) -> Result<Self, ModelError> {
        let dim = tw.ncols();
        Self::new(DMatrix::zeros(0, dim), DVector::zeros(0), tw, cw)
    }

    /// Axis-aligned box `lo <= z <= hi`, two weak rows per coordinate
    /// (upper bound first).
    pub fn boxed(bounds: &[(f64, f64)]) -> Self {
        let n = bounds.len();
        let mut tw = DMatrix::zeros(2 * n, n);
        let mut cw = DVector::zeros(2 * n);
        for (k, &(lo, hi)) in bounds.iter().enumerate() {
            tw[(2 * k, k)] = 1.0;
            cw[2 * k] = hi;
            tw[(2 * k + 1, k)] = -1.0;
            cw[2 * k + 1] = -lo;
        }
        Self::weak(tw, cw).expect("box rows are consistent")
    }

    pub fn dim(&self) -> usize {
        self.ts.ncols()
    }

    pub fn strict_matrix(&self) -> &DMatrix<f64> {
        &self.ts
    }

    pub fn strict_rhs(&self) -> &DVector<f64> {
        &self.cs
    }

    pub fn weak_matrix(&self) -> &DMatrix<f64> {
        &self.tw
    }

    pub fn weak_rhs(&self) -> &DVector<f64> {
        &self.cw
    }

    pub fn n_strict(&self) -> usize {
        self.ts.nrows()
    }

    pub fn n_weak(&self) -> usize {
        self.tw.nrows()
    }

    /// Exact membership: strict rows use `<`, weak rows use `<=`, no tolerance.
    pub fn contains(&self, z: &DVector<f64>) -> bool {
        debug_assert_eq!(z.len(), self.dim());
        let strict_ok =
            (0..self.ts.nrows()).all(|r| self.ts.row(r).dot(&z.transpose()) < self.cs[r]);
        strict_ok && (0..self.tw.nrows()).all(|r| self.tw.row(r).dot(&z.transpose()) <= self.cw[r])
    }

    /// Stacks the constraints of both polyhedra (self first).
    pub fn intersect(&self, other: &Polyhedron) -> Result<Polyhedron, ModelError> {
        check_dim("intersection dimension", self.dim(), other.dim())?;
        Polyhedron::new(
            vstack(&self.ts, &other.ts),
            vconcat(&self.cs, &other.cs),
            vstack(&self.tw, &other.tw),
            vconcat(&self.cw, &other.cw),
        )
    }

    /// Rows `[c | -T]` of the strict block, acting on homogeneous points.
    fn strict_rows_homogeneous(&self) -> DMatrix<f64> {
        rhs_minus_matrix(&self.cs, &self.ts)
    }

    fn weak_rows_homogeneous(&self) -> DMatrix<f64> {
        rhs_minus_matrix(&self.cw, &self.tw)
    }
}

fn rhs_minus_matrix(c: &DVector<f64>, t: &DMatrix<f64>) -> DMatrix<f64> {
    let mut e = DMatrix::zeros(t.nrows(), t.ncols() + 1);
    e.column_mut(0).copy_from(c);
    e.columns_mut(1, t.ncols()).copy_from(&(-t));
    e
}

pub(crate) fn vstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    debug_assert_eq!(a.ncols(), b.ncols());
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols());
    out.rows_mut(0, a.nrows()).copy_from(a);
    out.rows_mut(a.nrows(), b.nrows()).copy_from(b);
    out
}

fn vconcat(a: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(a.len() + b.len());
    out.rows_mut(0, a.len()).copy_from(a);
    out.rows_mut(a.len(), b.len()).copy_from(b);
    out
}

fn leading_row(width: usize) -> DMatrix<f64> {
    let mut r = DMatrix::zeros(1, width);
    r[(0, 0)] = 1.0;
    r
}

/// Affine update `x' = A x + B u + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineLaw {
    a: DMatrix<f64>,
    b_in: DMatrix<f64>,
    offset: DVector<f64>,
}

impl AffineLaw {
    pub fn new(
        a: DMatrix<f64>,
        b_in: DMatrix<f64>,
        offset: DVector<f64>,
    ) -> Result<Self, ModelError> {
        let d = a.nrows();
        check_dim("A columns", d, a.ncols())?;
        check_dim("B rows", d, b_in.nrows())?;
        check_dim("b length", d, offset.len())?;
        Ok(Self { a, b_in, offset })
    }

    pub fn zero(d: usize, m: usize) -> Self {
        Self {
            a: DMatrix::zeros(d, d),
            b_in: DMatrix::zeros(d, m),
            offset: DVector::zeros(d),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn input_dim(&self) -> usize {
        self.b_in.ncols()
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b_in
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn apply(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        &self.a * x + &self.b_in * u + &self.offset
    }

    /// Linear part of the state-input image map `(x, u) -> (A x + B u, u)`.
    pub(crate) fn image_linear(&self) -> DMatrix<f64> {
        let (d, m) = (self.state_dim(), self.input_dim());
        let mut g = DMatrix::zeros(d + m, d + m);
        g.view_mut((0, 0), (d, d)).copy_from(&self.a);
        g.view_mut((0, d), (d, m)).copy_from(&self.b_in);
        for k in 0..m {
            g[(d + k, d + k)] = 1.0;
        }
        g
    }

    /// Offset of the state-input image map, `(b, 0)`.
    pub(crate) fn image_offset(&self) -> DVector<f64> {
        let (d, m) = (self.state_dim(), self.input_dim());
        let mut v = DVector::zeros(d + m);
        v.rows_mut(0, d).copy_from(&self.offset);
        v
    }
}

/// The `(1+d+m)`-square matrix acting on `(1, x, u)` as one step of the law,
/// with the virtual input dynamics `u' = u`.
#[derive(Debug, Clone, PartialEq)]
pub struct HomogeneousLaw {
    f: DMatrix<f64>,
}

impl HomogeneousLaw {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.f
    }
}

pub fn homogenize(law: &AffineLaw, d: usize, m: usize) -> Result<HomogeneousLaw, ModelError> {
    check_dim("law state dimension", d, law.state_dim())?;
    check_dim("law input dimension", m, law.input_dim())?;
    let n = 1 + d + m;
    let mut f = DMatrix::zeros(n, n);
    f[(0, 0)] = 1.0;
    f.view_mut((1, 0), (d, 1)).copy_from(&law.offset);
    f.view_mut((1, 1), (d, d)).copy_from(&law.a);
    f.view_mut((1, 1 + d), (d, m)).copy_from(&law.b_in);
    for k in 0..m {
        f[(1 + d + k, 1 + d + k)] = 1.0;
    }
    Ok(HomogeneousLaw { f })
}

/// Stacked constraint rows acting on homogeneous points `(1, x, u)`.
///
/// The first `n_strict` rows form the strict block and start with the
/// constant row `(1, 0, ..., 0)`; the remaining rows form the weak block.
/// Every point of the underlying set maps to a nonnegative vector whose strict
/// part is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadMatrix {
    e: DMatrix<f64>,
    n_strict: usize,
}

impl QuadMatrix {
    pub fn from_blocks(strict: DMatrix<f64>, weak: DMatrix<f64>) -> Self {
        let n_strict = strict.nrows();
        Self {
            e: vstack(&strict, &weak),
            n_strict,
        }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.e
    }

    pub fn rows(&self) -> usize {
        self.e.nrows()
    }

    pub fn cols(&self) -> usize {
        self.e.ncols()
    }

    pub fn n_strict(&self) -> usize {
        self.n_strict
    }

    pub fn n_weak(&self) -> usize {
        self.e.nrows() - self.n_strict
    }

    pub fn strict_block(&self) -> DMatrix<f64> {
        self.e.rows(0, self.n_strict).into_owned()
    }

    pub fn weak_block(&self) -> DMatrix<f64> {
        self.e.rows(self.n_strict, self.n_weak()).into_owned()
    }

    /// `E (1, z)`.
    pub fn image(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.e * homogeneous_point(z)
    }

    /// `(1, z)^T E^T W E (1, z)`; nonnegative on the underlying set whenever
    /// `W` is symmetric with nonnegative entries.
    pub fn quadratic_form(&self, w: &DMatrix<f64>, z: &DVector<f64>) -> f64 {
        let v = self.image(z);
        v.dot(&(w * &v))
    }

    /// `E^T W E`.
    pub fn congruence(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        self.e.transpose() * w * &self.e
    }
}

/// `E = [[1, 0], [cs, -Ts], [cw, -Tw]]`.
pub fn cell_quadratization(cell: &Polyhedron) -> QuadMatrix {
    let n = cell.dim() + 1;
    let strict = vstack(&leading_row(n), &cell.strict_rows_homogeneous());
    QuadMatrix::from_blocks(strict, cell.weak_rows_homogeneous())
}

/// Rows of `to` pulled back through the law: a point `z` satisfies them iff
/// its image `(A x + B u + b, u)` lies in `to`.
fn pullback_rows(c: &DVector<f64>, t: &DMatrix<f64>, law: &AffineLaw) -> DMatrix<f64> {
    let lin = -(t * law.image_linear());
    let rhs = c - t * law.image_offset();
    let mut e = DMatrix::zeros(t.nrows(), lin.ncols() + 1);
    e.column_mut(0).copy_from(&rhs);
    e.columns_mut(1, lin.ncols()).copy_from(&lin);
    e
}

/// Quadratization of `X^{ij} = {z in cell_i | image of z under law_i in cell_j}`.
///
/// Strict block: constant row, strict rows of `cell_i`, pulled-back strict
/// rows of `cell_j`; weak block: weak rows of `cell_i`, pulled-back weak rows
/// of `cell_j`.
pub fn switch_quadratization(
    cell_i: &Polyhedron,
    law_i: &AffineLaw,
    cell_j: &Polyhedron,
) -> Result<QuadMatrix, ModelError> {
    let dim = law_i.state_dim() + law_i.input_dim();
    check_dim("source cell dimension", dim, cell_i.dim())?;
    check_dim("target cell dimension", dim, cell_j.dim())?;
    let strict = vstack(
        &vstack(&leading_row(dim + 1), &cell_i.strict_rows_homogeneous()),
        &pullback_rows(&cell_j.cs, &cell_j.ts, law_i),
    );
    let weak = vstack(
        &cell_i.weak_rows_homogeneous(),
        &pullback_rows(&cell_j.cw, &cell_j.tw, law_i),
    );
    Ok(QuadMatrix::from_blocks(strict, weak))
}

/// Quadratization of `X^0 ∩ X^i`: constant row, strict rows of `init` then
/// of `cell`, followed by the weak rows of `init` then of `cell`.
pub fn init_quadratization(init: &Polyhedron, cell: &Polyhedron) -> Result<QuadMatrix, ModelError> {
    check_dim("initial set dimension", cell.dim(), init.dim())?;
    let n = cell.dim() + 1;
    let strict = vstack(
        &vstack(&leading_row(n), &init.strict_rows_homogeneous()),
        &cell.strict_rows_homogeneous(),
    );
    let weak = vstack(&init.weak_rows_homogeneous(), &cell.weak_rows_homogeneous());
    Ok(QuadMatrix::from_blocks(strict, weak))
}

/// A piecewise affine system over a polyhedral partition of the state-input
/// space.
#[derive(Debug, Clone, PartialEq)]
pub struct PwaSystem {
    d: usize,
    m: usize,
    cells: Vec<Polyhedron>,
    laws: Vec<AffineLaw>,
    input: Polyhedron,
    init: Polyhedron,
}

impl PwaSystem {
    /// Checks dimensions only. Disjointness of the cells and boundedness of
    /// the input polytope are LP questions; see [`crate::feas`].
    pub fn new(
        d: usize,
        m: usize,
        cells: Vec<Polyhedron>,
        laws: Vec<AffineLaw>,
        input: Polyhedron,
        init: Polyhedron,
    ) -> Result<Self, ModelError> {
        if cells.is_empty() || cells.len() != laws.len() {
            return Err(ModelError::CellLawCount {
                cells: cells.len(),
                laws: laws.len(),
            });
        }
        for (i, (cell, law)) in cells.iter().zip(&laws).enumerate() {
            check_dim(&format!("cell {i} dimension"), d + m, cell.dim())?;
            check_dim(&format!("law {i} state dimension"), d, law.state_dim())?;
            check_dim(&format!("law {i} input dimension"), m, law.input_dim())?;
        }
        check_dim("input polytope dimension", m, input.dim())?;
        check_dim("initial set dimension", d + m, init.dim())?;
        Ok(Self {
            d,
            m,
            cells,
            laws,
            input,
            init,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.d
    }

    pub fn input_dim(&self) -> usize {
        self.m
    }

    /// `d + m`.
    pub fn dim(&self) -> usize {
        self.d + self.m
    }

    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Polyhedron] {
        &self.cells
    }

    pub fn cell(&self, i: usize) -> Result<&Polyhedron, ModelError> {
        self.cells.get(i).ok_or(ModelError::CellIndex {
            index: i,
            count: self.cells.len(),
        })
    }

    pub fn laws(&self) -> &[AffineLaw] {
        &self.laws
    }

    pub fn law(&self, i: usize) -> Result<&AffineLaw, ModelError> {
        self.laws.get(i).ok_or(ModelError::CellIndex {
            index: i,
            count: self.laws.len(),
        })
    }

    pub fn input_polytope(&self) -> &Polyhedron {
        &self.input
    }

    pub fn init(&self) -> &Polyhedron {
        &self.init
    }

    pub fn homogeneous_law(&self, i: usize) -> Result<HomogeneousLaw, ModelError> {
        homogenize(self.law(i)?, self.d, self.m)
    }

    pub fn cell_quadratization(&self, i: usize) -> Result<QuadMatrix, ModelError> {
        Ok(cell_quadratization(self.cell(i)?))
    }

    pub fn switch_quadratization(&self, i: usize, j: usize) -> Result<QuadMatrix, ModelError> {
        switch_quadratization(self.cell(i)?, self.law(i)?, self.cell(j)?)
    }

    pub fn init_quadratization(&self, i: usize) -> Result<QuadMatrix, ModelError> {
        init_quadratization(&self.init, self.cell(i)?)
    }

    /// One step of law `i`; membership of `(x, u)` in cell `i` is the
    /// caller's responsibility.
    pub fn step(
        &self,
        i: usize,
        x: &DVector<f64>,
        u: &DVector<f64>,
    ) -> Result<DVector<f64>, ModelError> {
        let law = self.law(i)?;
        check_dim("state vector", self.d, x.len())?;
        check_dim("input vector", self.m, u.len())?;
        Ok(law.apply(x, u))
    }

    /// The unique cell containing `(x, u)`, `None` if no cell does, or a
    /// partition violation if several do.
    pub fn cell_of(&self, x: &DVector<f64>, u: &DVector<f64>) -> Result<Option<usize>, ModelError> {
        check_dim("state vector", self.d, x.len())?;
        check_dim("input vector", self.m, u.len())?;
        self.cell_of_point(&join_state_input(x, u))
    }

    pub fn cell_of_point(&self, z: &DVector<f64>) -> Result<Option<usize>, ModelError> {
        let hits: Vec<usize> = self
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.contains(z))
            .map(|(i, _)| i)
            .collect();
        match hits.len() {
            0 => Ok(None),
            1 => Ok(Some(hits[0])),
            _ => Err(ModelError::PartitionViolation { cells: hits }),
        }
    }
}
