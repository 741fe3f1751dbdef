//! Dense two-phase simplex for small LPs `min c^T x, A x = b, x >= lower`.
//!
//! Bland's rule is used throughout, so the method terminates without an
//! anti-cycling perturbation. Basic solutions are recomputed from the final
//! basis by a direct solve, which keeps equality residuals near machine
//! precision. The problems solved here have at most a few dozen rows.

use nalgebra::{DMatrix, DVector};

/// Equality residual accepted on a returned point.
pub const FEASIBILITY_TOL: f64 = 1e-8;

const MAX_PIVOTS: usize = 50_000;

#[derive(Debug, Clone, Copy)]
struct Settings {
    pivot_tol: f64,
    cost_tol: f64,
}

const DEFAULT: Settings = Settings {
    pivot_tol: 1e-9,
    cost_tol: 1e-10,
};

const TIGHT: Settings = Settings {
    pivot_tol: 1e-11,
    cost_tol: 1e-12,
};

#[derive(Debug, Clone, PartialEq)]
pub enum LpStatus {
    Feasible(DVector<f64>),
    Infeasible,
    /// Numerical trouble; never to be read as feasible or infeasible.
    Unknown,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LpOutcome {
    Optimal { x: DVector<f64>, value: f64 },
    Infeasible,
    Unbounded,
    Unknown,
}

/// Feasibility of `{x | aeq x = beq, x >= lower}`. A lower bound of
/// `-inf` makes the variable free.
pub fn lp_feasible(aeq: &DMatrix<f64>, beq: &DVector<f64>, lower: &[f64]) -> LpStatus {
    match minimize(&DVector::zeros(aeq.ncols()), aeq, beq, lower) {
        LpOutcome::Optimal { x, .. } => LpStatus::Feasible(x),
        LpOutcome::Infeasible => LpStatus::Infeasible,
        // A zero objective cannot be unbounded.
        LpOutcome::Unbounded | LpOutcome::Unknown => LpStatus::Unknown,
    }
}

/// `min c^T x` subject to `aeq x = beq`, `x >= lower` (`-inf` for free).
pub fn minimize(
    c: &DVector<f64>,
    aeq: &DMatrix<f64>,
    beq: &DVector<f64>,
    lower: &[f64],
) -> LpOutcome {
    assert_eq!(aeq.ncols(), c.len(), "cost length must match column count");
    assert_eq!(aeq.nrows(), beq.len(), "rhs length must match row count");
    assert_eq!(aeq.ncols(), lower.len(), "one lower bound per column");

    let std = StandardForm::new(c, aeq, beq, lower);
    for settings in [DEFAULT, TIGHT] {
        match std.solve(settings) {
            Some(LpOutcome::Optimal { x, value }) => {
                if std.verify(aeq, beq, lower, &x) {
                    return LpOutcome::Optimal { x, value };
                }
                log::debug!("simplex point failed verification, retrying with tight settings");
            }
            Some(other) => return other,
            None => log::debug!("simplex gave up, retrying with tight settings"),
        }
    }
    LpOutcome::Unknown
}

/// Shifted/split problem `min ĉ^T y, Â y = b̂, y >= 0`.
struct StandardForm {
    a: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
    /// For each original variable: column of `y` and optional column of the
    /// negative part, plus the shift.
    map: Vec<(usize, Option<usize>, f64)>,
    c_shift: f64,
}

impl StandardForm {
    fn new(c: &DVector<f64>, aeq: &DMatrix<f64>, beq: &DVector<f64>, lower: &[f64]) -> Self {
        let n = aeq.ncols();
        let mut map = Vec::with_capacity(n);
        let mut ncols = 0;
        for &l in lower {
            if l.is_finite() {
                map.push((ncols, None, l));
                ncols += 1;
            } else {
                map.push((ncols, Some(ncols + 1), 0.0));
                ncols += 2;
            }
        }
        let mut a = DMatrix::zeros(aeq.nrows(), ncols);
        let mut cc = DVector::zeros(ncols);
        let mut b = beq.clone();
        let mut c_shift = 0.0;
        for (k, &(pos, neg, shift)) in map.iter().enumerate() {
            a.column_mut(pos).copy_from(&aeq.column(k));
            cc[pos] = c[k];
            if let Some(neg) = neg {
                a.column_mut(neg).copy_from(&(-aeq.column(k)));
                cc[neg] = -c[k];
            }
            if shift != 0.0 {
                b -= aeq.column(k) * shift;
                c_shift += c[k] * shift;
            }
        }
        Self {
            a,
            b,
            c: cc,
            map,
            c_shift,
        }
    }

    fn recover(&self, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.map.len(),
            self.map
                .iter()
                .map(|&(pos, neg, shift)| y[pos] - neg.map_or(0.0, |k| y[k]) + shift),
        )
    }

    fn verify(
        &self,
        aeq: &DMatrix<f64>,
        beq: &DVector<f64>,
        lower: &[f64],
        x: &DVector<f64>,
    ) -> bool {
        let residual = (aeq * x - beq).amax();
        let bounds_ok = x.iter().zip(lower).all(|(v, l)| *v >= *l);
        residual <= FEASIBILITY_TOL && bounds_ok && x.iter().all(|v| v.is_finite())
    }

    /// `None` means the pivot budget was exhausted or the basis went singular.
    fn solve(&self, s: Settings) -> Option<LpOutcome> {
        let (m, n) = self.a.shape();
        if m == 0 {
            // No constraints: optimal at y = 0 unless some cost is negative.
            if self.c.iter().any(|&v| v < 0.0) {
                return Some(LpOutcome::Unbounded);
            }
            let x = self.recover(&DVector::zeros(n));
            return Some(LpOutcome::Optimal {
                x,
                value: self.c_shift,
            });
        }

        // Tableau columns: n structural, m artificial, 1 rhs. Last row is cost.
        let width = n + m + 1;
        let rhs = n + m;
        let mut t = DMatrix::zeros(m + 1, width);
        for r in 0..m {
            let sign = if self.b[r] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..n {
                t[(r, j)] = sign * self.a[(r, j)];
            }
            t[(r, n + r)] = 1.0;
            t[(r, rhs)] = sign * self.b[r];
        }
        let mut basis: Vec<usize> = (n..n + m).collect();
        let scale = 1.0 + self.b.amax();

        // Phase 1: minimize the sum of artificials.
        for j in 0..n {
            t[(m, j)] = -(0..m).map(|r| t[(r, j)]).sum::<f64>();
        }
        t[(m, rhs)] = -(0..m).map(|r| t[(r, rhs)]).sum::<f64>();
        if !run_simplex(&mut t, &mut basis, n + m, s)? {
            // Phase 1 is bounded below by zero.
            return None;
        }
        let infeasibility = -t[(m, rhs)];
        if infeasibility > 1e-7 * scale {
            return Some(LpOutcome::Infeasible);
        }
        if infeasibility > 1e-9 * scale {
            return None;
        }

        // Drive artificials out of the basis; drop redundant rows.
        let mut active: Vec<bool> = vec![true; m];
        for r in 0..m {
            if basis[r] < n {
                continue;
            }
            match (0..n).find(|&j| t[(r, j)].abs() > s.pivot_tol) {
                Some(j) => pivot(&mut t, &mut basis, r, j),
                None => active[r] = false,
            }
        }

        // Phase 2 cost row over structural columns; artificials are barred.
        for j in 0..width {
            t[(m, j)] = if j < n { self.c[j] } else { 0.0 };
        }
        for r in 0..m {
            if active[r] {
                let cb = self.c[basis[r]];
                if cb != 0.0 {
                    for j in 0..width {
                        t[(m, j)] -= cb * t[(r, j)];
                    }
                }
            }
        }
        for r in 0..m {
            if !active[r] {
                for j in 0..width {
                    t[(r, j)] = 0.0;
                }
            }
        }
        if !run_simplex(&mut t, &mut basis, n, s)? {
            return Some(LpOutcome::Unbounded);
        }

        let y = self.basic_solution(&basis, &active, n)?;
        let x = self.recover(&y);
        let value = self.c.dot(&y) + self.c_shift;
        Some(LpOutcome::Optimal { x, value })
    }

    /// Re-solves `B y_B = b` from the final basis for an accurate point.
    fn basic_solution(&self, basis: &[usize], active: &[bool], n: usize) -> Option<DVector<f64>> {
        let rows: Vec<usize> = (0..basis.len()).filter(|&r| active[r]).collect();
        let cols: Vec<usize> = rows.iter().map(|&r| basis[r]).collect();
        let mut y = DVector::zeros(n);
        if rows.is_empty() {
            return Some(y);
        }
        let k = rows.len();
        let bmat = DMatrix::from_fn(k, k, |r, c| self.a[(rows[r], cols[c])]);
        let rhs = DVector::from_iterator(k, rows.iter().map(|&r| self.b[r]));
        let sol = bmat.lu().solve(&rhs)?;
        for (idx, &col) in cols.iter().enumerate() {
            // Basic values are nonnegative up to rounding.
            y[col] = sol[idx].max(0.0);
        }
        Some(y)
    }
}

/// Runs Bland-rule pivots over columns `0..allowed`. Returns `Some(true)` at
/// optimality, `Some(false)` on an unbounded ray, `None` on budget exhaustion.
fn run_simplex(
    t: &mut DMatrix<f64>,
    basis: &mut [usize],
    allowed: usize,
    s: Settings,
) -> Option<bool> {
    let m = basis.len();
    let rhs = t.ncols() - 1;
    for _ in 0..MAX_PIVOTS {
        let Some(enter) = (0..allowed).find(|&j| t[(m, j)] < -s.cost_tol) else {
            return Some(true);
        };
        let mut leave: Option<(usize, f64)> = None;
        for r in 0..m {
            let a = t[(r, enter)];
            if a > s.pivot_tol {
                let ratio = t[(r, rhs)] / a;
                leave = match leave {
                    None => Some((r, ratio)),
                    Some((lr, lratio)) => {
                        let tie = (ratio - lratio).abs() <= 1e-12 * (1.0 + lratio.abs());
                        if ratio < lratio && !tie || tie && basis[r] < basis[lr] {
                            Some((r, ratio))
                        } else {
                            Some((lr, lratio))
                        }
                    }
                };
            }
        }
        let Some((row, _)) = leave else {
            return Some(false);
        };
        pivot(t, basis, row, enter);
    }
    None
}

fn pivot(t: &mut DMatrix<f64>, basis: &mut [usize], row: usize, col: usize) {
    let p = t[(row, col)];
    let width = t.ncols();
    for j in 0..width {
        t[(row, j)] /= p;
    }
    t[(row, col)] = 1.0;
    for r in 0..t.nrows() {
        if r == row {
            continue;
        }
        let f = t[(r, col)];
        if f != 0.0 {
            for j in 0..width {
                t[(r, j)] -= f * t[(row, j)];
            }
            t[(r, col)] = 0.0;
        }
    }
    basis[row] = col;
}
