//! Solving a [`ConicProgram`] with the Clarabel interior-point solver.
//!
//! Clarabel works in the form `min cᵀx  s.t.  Ax + s = b, s ∈ K`. A PSD block
//! `C0 - eps*I + sum_v x_v C_v ⪰ 0` becomes `s = svec(C0 - eps*I) - sum_v x_v svec(C_v)`
//! with `svec` the column-wise upper triangle, off-diagonals scaled by √2
//! (`eps` only on blocks that take the margin).
//! Multiplier nonnegativity is `-x_k + s = 0, s >= 0`.

use std::time::{Duration, Instant};

use clarabel::algebra::CscMatrix;
use clarabel::solver::{DefaultSettings, DefaultSolver, IPSolver, SolverStatus, SupportedConeT};
use serde::{Deserialize, Serialize};

use super::ConicProgram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    NearOptimal,
    Infeasible,
    Unknown,
}

impl SolveStatus {
    pub fn is_usable(self) -> bool {
        matches!(self, SolveStatus::Optimal | SolveStatus::NearOptimal)
    }
}

#[derive(Debug, Clone, Default)]
pub struct SolveOptions {
    pub time_limit: Option<Duration>,
    pub verbose: bool,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub status: SolveStatus,
    /// Variable values; empty unless the status is usable.
    pub x: Vec<f64>,
    pub objective: Option<f64>,
    pub iterations: u32,
    pub elapsed: Duration,
}

fn map_status(s: SolverStatus) -> SolveStatus {
    match s {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::AlmostSolved => SolveStatus::NearOptimal,
        SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => {
            SolveStatus::Infeasible
        }
        _ => SolveStatus::Unknown,
    }
}

struct Triplets {
    rows: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl Triplets {
    fn push(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            self.rows.push(r);
            self.cols.push(c);
            self.vals.push(v);
        }
    }
}

/// `(A, b, cones)` of the Clarabel standard form.
fn standard_form(program: &ConicProgram) -> (CscMatrix<f64>, Vec<f64>, Vec<SupportedConeT<f64>>) {
    let mut a = Triplets {
        rows: Vec::new(),
        cols: Vec::new(),
        vals: Vec::new(),
    };
    let mut b = Vec::new();
    let mut cones = Vec::new();

    let mult = program.layout.multipliers();
    if !mult.is_empty() {
        for (r, v) in mult.clone().enumerate() {
            a.push(r, v, -1.0);
            b.push(0.0);
        }
        cones.push(SupportedConeT::NonnegativeConeT(mult.len()));
    }

    let sqrt2 = std::f64::consts::SQRT_2;
    for (k, block) in program.blocks.iter().enumerate() {
        let n = block.size();
        let base = b.len();
        let mut row = base;
        for col in 0..n {
            for r in 0..=col {
                let scale = if r == col { 1.0 } else { sqrt2 };
                let shift = if r == col {
                    program.block_margin(k)
                } else {
                    0.0
                };
                b.push(scale * (block.constant[(r, col)] - shift));
                for (v, c) in &block.terms {
                    a.push(row, *v, -scale * c[(r, col)]);
                }
                row += 1;
            }
        }
        cones.push(SupportedConeT::PSDTriangleConeT(n));
    }
    let m = b.len();
    let a = CscMatrix::new_from_triplets(m, program.n_vars(), a.rows, a.cols, a.vals);
    (a, b, cones)
}

pub fn solve(program: &ConicProgram, opts: &SolveOptions) -> Solution {
    let start = Instant::now();
    let n = program.n_vars();
    let (a, b, cones) = standard_form(program);
    let p = CscMatrix::<f64>::zeros((n, n));
    let c = program.objective();

    let mut settings = DefaultSettings::<f64> {
        verbose: opts.verbose,
        ..DefaultSettings::default()
    };
    if let Some(limit) = opts.time_limit {
        settings.time_limit = limit.as_secs_f64();
    }

    let failed = |start: Instant| Solution {
        status: SolveStatus::Unknown,
        x: Vec::new(),
        objective: None,
        iterations: 0,
        elapsed: start.elapsed(),
    };
    let mut solver = match DefaultSolver::new(&p, &c, &a, &b, &cones, settings) {
        Ok(s) => s,
        Err(e) => {
            log::warn!("solver setup failed: {e}");
            return failed(start);
        }
    };
    solver.solve();
    let sol = &solver.solution;
    let status = map_status(sol.status);
    log::debug!(
        "clarabel status {:?} after {} iterations",
        sol.status,
        sol.iterations
    );
    if !status.is_usable() || sol.x.iter().any(|v| !v.is_finite()) {
        return Solution {
            status: if status.is_usable() {
                SolveStatus::Unknown
            } else {
                status
            },
            ..failed(start)
        };
    }
    Solution {
        status,
        objective: Some(program.objective_value(&sol.x)),
        x: sol.x.clone(),
        iterations: sol.iterations,
        elapsed: start.elapsed(),
    }
}
