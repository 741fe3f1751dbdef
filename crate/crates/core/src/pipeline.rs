//! End-to-end analysis: prune switches, gate initial constraints, assemble,
//! solve, extract. A residual rejection triggers a re-solve with a larger
//! margin.

use std::time::{Duration, Instant};

use thiserror::Error;

use crate::feas::{build_switch_graph, init_intersects_cell, SwitchGraph};
use crate::model::{ModelError, PwaSystem};
use crate::sdp::{
    assemble_program, extract_certificate, solve, Certificate, ConicProgram, Rejection, SdpError,
    Solution, SolveOptions, SolveStatus, DEFAULT_MARGIN,
};

#[derive(Debug, Error)]
pub enum AnalyzeError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Sdp(#[from] SdpError),
}

#[derive(Debug, Clone)]
pub struct AnalyzeOptions {
    pub margin: f64,
    /// Extra solves after a residual rejection, each with the margin
    /// multiplied by `margin_growth`.
    pub margin_retries: usize,
    pub margin_growth: f64,
    pub solve: SolveOptions,
}

impl Default for AnalyzeOptions {
    fn default() -> Self {
        Self {
            margin: DEFAULT_MARGIN,
            margin_retries: 3,
            margin_growth: 10.0,
            solve: SolveOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Attempt {
    pub margin: f64,
    pub status: SolveStatus,
    pub objective: Option<f64>,
    pub rejection: Option<Rejection>,
}

#[derive(Debug, Clone)]
pub struct AnalysisOutcome {
    pub graph: SwitchGraph,
    pub init_cells: Vec<bool>,
    /// Program and solution of the last attempt.
    pub program: ConicProgram,
    pub solution: Solution,
    pub result: Result<Certificate, Rejection>,
    pub attempts: Vec<Attempt>,
    pub elapsed: Duration,
}

impl AnalysisOutcome {
    pub fn certificate(&self) -> Option<&Certificate> {
        self.result.as_ref().ok()
    }

    pub fn accepted(&self) -> bool {
        self.result.is_ok()
    }
}

pub fn init_cells(sys: &PwaSystem) -> Result<Vec<bool>, ModelError> {
    (0..sys.n_cells())
        .map(|i| init_intersects_cell(sys, i))
        .collect()
}

pub fn analyze(sys: &PwaSystem, opts: &AnalyzeOptions) -> Result<AnalysisOutcome, AnalyzeError> {
    let start = Instant::now();
    let graph = build_switch_graph(sys)?;
    let init = init_cells(sys)?;
    log::info!(
        "{} of {} switches fireable, init meets {} of {} cells",
        graph.count(),
        sys.n_cells() * sys.n_cells(),
        init.iter().filter(|&&b| b).count(),
        sys.n_cells()
    );
    let base = assemble_program(sys, &graph, &init, opts.margin)?;
    let mut margin = opts.margin;
    let mut attempts = Vec::new();
    loop {
        let program = base.with_margin(margin);
        let mut solve_opts = opts.solve.clone();
        if let Some(limit) = solve_opts.time_limit {
            solve_opts.time_limit = Some(limit.saturating_sub(start.elapsed()));
        }
        let solution = solve(&program, &solve_opts);
        let result = extract_certificate(&solution, &program);
        attempts.push(Attempt {
            margin,
            status: solution.status,
            objective: solution.objective,
            rejection: result.as_ref().err().cloned(),
        });
        let retry = matches!(result, Err(Rejection::Residual { .. }))
            && attempts.len() <= opts.margin_retries;
        if let Err(r) = &result {
            log::info!("margin {margin:e}: {r}");
        }
        if !retry {
            return Ok(AnalysisOutcome {
                graph,
                init_cells: init,
                program,
                solution,
                result,
                attempts,
                elapsed: start.elapsed(),
            });
        }
        margin *= opts.margin_growth;
    }
}
