//! Turning a numeric solution into a checked certificate.
//!
//! Multiplier entries are clamped to be nonnegative, every block is
//! re-evaluated without the margin, and the smallest eigenvalue of each is
//! recorded. The certificate is accepted only if none is below
//! [`RESIDUAL_TOL`].

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{min_eig, ConicProgram, Solution, SolveStatus, ALPHA, BETA};
use crate::io::{matrix_to_rows, rows_to_matrix, to_canonical_json, IoError};

pub const RESIDUAL_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub block: String,
    pub min_eig: f64,
}

/// `V(z) = zᵀ P z + 2 qᵀ z` on one cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellQuadratic {
    pub p: DMatrix<f64>,
    pub q: DVector<f64>,
}

impl CellQuadratic {
    pub fn value(&self, z: &DVector<f64>) -> f64 {
        (z.transpose() * &self.p * z)[(0, 0)] + 2.0 * self.q.dot(z)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Certificate {
    pub alpha: f64,
    pub beta: f64,
    pub eps: f64,
    pub cells: Vec<CellQuadratic>,
    pub residuals: Vec<Residual>,
}

#[derive(Serialize, Deserialize)]
struct CellJson {
    #[serde(rename = "P")]
    p: Vec<Vec<f64>>,
    q: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CertificateJson {
    alpha: f64,
    beta: f64,
    eps: f64,
    cells: Vec<CellJson>,
    residuals: Vec<Residual>,
}

impl Certificate {
    pub fn value(&self, i: usize, z: &DVector<f64>) -> f64 {
        self.cells[i].value(z)
    }

    pub fn worst_residual(&self) -> Option<&Residual> {
        self.residuals
            .iter()
            .min_by(|a, b| a.min_eig.total_cmp(&b.min_eig))
    }

    pub fn is_valid(&self) -> bool {
        self.alpha.is_finite()
            && self.beta >= 0.0
            && self.residuals.iter().all(|r| r.min_eig >= -RESIDUAL_TOL)
    }

    pub fn to_json(&self) -> String {
        to_canonical_json(&CertificateJson {
            alpha: self.alpha,
            beta: self.beta,
            eps: self.eps,
            cells: self
                .cells
                .iter()
                .map(|c| CellJson {
                    p: matrix_to_rows(&c.p),
                    q: c.q.iter().copied().collect(),
                })
                .collect(),
            residuals: self.residuals.clone(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        let dto: CertificateJson = serde_json::from_str(text)?;
        let cells = dto
            .cells
            .into_iter()
            .enumerate()
            .map(|(i, c)| {
                let n = c.q.len();
                Ok(CellQuadratic {
                    p: rows_to_matrix(&c.p, n, &format!("cells[{i}].P"))?,
                    q: DVector::from_vec(c.q),
                })
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        if cells.iter().any(|c| c.p.nrows() != c.q.len()) {
            return Err(IoError::Ragged("certificate cell P".into()));
        }
        Ok(Self {
            alpha: dto.alpha,
            beta: dto.beta,
            eps: dto.eps,
            cells,
            residuals: dto.residuals,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Rejection {
    #[error("solver returned no usable solution (status {0:?})")]
    NoSolution(SolveStatus),
    #[error("block {block} has minimum eigenvalue {min_eig:.3e}")]
    Residual {
        block: String,
        min_eig: f64,
        residuals: Vec<Residual>,
    },
    #[error("beta = {0} is negative")]
    NegativeBeta(f64),
    #[error("alpha is not finite")]
    NonFiniteAlpha,
}

/// Copy of `x` with every multiplier entry replaced by `max(entry, 0)`.
pub fn clamp_multipliers(program: &ConicProgram, x: &[f64]) -> Vec<f64> {
    let mut out = x.to_vec();
    for k in program.layout.multipliers() {
        out[k] = out[k].max(0.0);
    }
    out
}

/// Minimum eigenvalue of every margin-free block at the clamped point.
pub fn residuals(program: &ConicProgram, x: &[f64]) -> Vec<Residual> {
    let x = clamp_multipliers(program, x);
    program
        .blocks
        .iter()
        .map(|b| Residual {
            block: b.kind.to_string(),
            min_eig: min_eig(&b.evaluate(&x)),
        })
        .collect()
}

pub fn extract_certificate(
    solution: &Solution,
    program: &ConicProgram,
) -> Result<Certificate, Rejection> {
    if !solution.status.is_usable() || solution.x.len() != program.n_vars() {
        return Err(Rejection::NoSolution(solution.status));
    }
    let x = &solution.x;
    let residuals = residuals(program, x);
    let (alpha, beta) = (x[ALPHA], x[BETA]);
    if !alpha.is_finite() {
        return Err(Rejection::NonFiniteAlpha);
    }
    if let Some(worst) = residuals
        .iter()
        .min_by(|a, b| a.min_eig.total_cmp(&b.min_eig))
    {
        if !(worst.min_eig >= -RESIDUAL_TOL) {
            return Err(Rejection::Residual {
                block: worst.block.clone(),
                min_eig: worst.min_eig,
                residuals,
            });
        }
    }
    if !(beta >= 0.0) {
        return Err(Rejection::NegativeBeta(beta));
    }
    let layout = &program.layout;
    let cells = (0..layout.p.len())
        .map(|i| CellQuadratic {
            p: layout.p_value(i, x),
            q: layout.q_value(i, x),
        })
        .collect();
    Ok(Certificate {
        alpha,
        beta,
        eps: program.margin,
        cells,
        residuals,
    })
}
