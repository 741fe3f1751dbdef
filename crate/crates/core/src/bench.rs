//! Random piecewise affine systems and a batch harness that runs the full
//! analysis on each.
//!
//! Partitions are sign chambers of at most two hyperplanes in `(x, u)` space
//! (for three cells, two parallel hyperplanes cut three slabs). One side of
//! each hyperplane is strict and the other weak, so the cells partition the
//! space exactly. Every cell also carries the input range rows.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::certify::PolySampler;
use crate::feas::{cells_disjoint, polyhedron_nonempty};
use crate::model::{AffineLaw, ModelError, Polyhedron, PwaSystem};
use crate::pipeline::{analyze, AnalyzeOptions};
use crate::sdp::{Rejection, SolveStatus};

pub const MAX_DIM: usize = 4;
pub const MAX_CELLS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BenchError {
    #[error("state dimension must be in 1..={MAX_DIM}, got {0}")]
    Dim(usize),
    #[error("cell count must be in 1..={MAX_CELLS}, got {0}")]
    Cells(usize),
    #[error("target spectral radius must lie in (0, 1), got {0}")]
    Radius(f64),
    #[error("parameter `{0}` must be positive")]
    NonPositive(&'static str),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenParams {
    pub dim: usize,
    /// The input dimension is fixed to 1.
    pub cells: usize,
    /// Entries of `A` are uniform in `[-scale, scale]` before rescaling.
    pub scale: f64,
    pub rho_target: f64,
    /// Entries of `B` and `b` are uniform in `[-gain, gain]`.
    pub gain: f64,
    /// `u` ranges over `[-input_bound, input_bound]`.
    pub input_bound: f64,
    /// Initial states range over `[-init_radius, init_radius]^d`.
    pub init_radius: f64,
    pub seed: u64,
}

impl Default for GenParams {
    fn default() -> Self {
        Self {
            dim: 2,
            cells: 2,
            scale: 1.0,
            rho_target: 0.9,
            gain: 0.5,
            input_bound: 1.0,
            init_radius: 1.0,
            seed: 0,
        }
    }
}

impl GenParams {
    pub fn validate(&self) -> Result<(), BenchError> {
        if !(1..=MAX_DIM).contains(&self.dim) {
            return Err(BenchError::Dim(self.dim));
        }
        if !(1..=MAX_CELLS).contains(&self.cells) {
            return Err(BenchError::Cells(self.cells));
        }
        if !(self.rho_target > 0.0 && self.rho_target < 1.0) {
            return Err(BenchError::Radius(self.rho_target));
        }
        for (name, v) in [
            ("scale", self.scale),
            ("gain", self.gain),
            ("input_bound", self.input_bound),
            ("init_radius", self.init_radius),
        ] {
            if !(v > 0.0) {
                return Err(BenchError::NonPositive(name));
            }
        }
        Ok(())
    }
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.nrows() == 0 {
        return 0.0;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

fn uniform_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize, s: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-s..=s))
}

/// Scales `a` down to spectral radius `rho_target * (1 - 1e-6)` when it is
/// not already below `rho_target`.
pub fn stabilize(a: DMatrix<f64>, rho_target: f64) -> DMatrix<f64> {
    let rho = spectral_radius(&a);
    if rho >= rho_target {
        a * (rho_target / rho * (1.0 - 1e-6))
    } else {
        a
    }
}

pub fn random_stable_law<R: Rng>(rng: &mut R, p: &GenParams) -> AffineLaw {
    let a = stabilize(uniform_matrix(rng, p.dim, p.dim, p.scale), p.rho_target);
    let b_in = uniform_matrix(rng, p.dim, 1, p.gain);
    let offset = DVector::from_fn(p.dim, |_, _| rng.gen_range(-p.gain..=p.gain));
    AffineLaw::new(a, b_in, offset).expect("shapes follow the parameters")
}

fn random_normal<R: Rng>(rng: &mut R, n: usize) -> DVector<f64> {
    loop {
        let h = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0));
        if h.norm() > 0.1 {
            return h;
        }
    }
}

fn cell(strict: Vec<(DVector<f64>, f64)>, weak: Vec<(DVector<f64>, f64)>, n: usize) -> Polyhedron {
    let block = |rows: &[(DVector<f64>, f64)]| {
        (
            DMatrix::from_fn(rows.len(), n, |r, c| rows[r].0[c]),
            DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1)),
        )
    };
    let (ts, cs) = block(&strict);
    let (tw, cw) = block(&weak);
    Polyhedron::new(ts, cs, tw, cw).expect("rows share the ambient dimension")
}

/// Sign-chamber cells over `(x, u)`, input rows appended to each.
pub fn random_partition<R: Rng>(rng: &mut R, p: &GenParams) -> Vec<Polyhedron> {
    let n = p.dim + 1;
    let mut e_u = DVector::zeros(n);
    e_u[p.dim] = 1.0;
    let input_rows = [(e_u.clone(), p.input_bound), (-e_u, p.input_bound)];
    let offset = |rng: &mut R| rng.gen_range(-0.5..=0.5) * p.init_radius;
    let with_inputs = |mut weak: Vec<(DVector<f64>, f64)>| {
        weak.extend(input_rows.iter().cloned());
        weak
    };
    match p.cells {
        1 => vec![cell(vec![], with_inputs(vec![]), n)],
        2 => {
            let (h, c) = (random_normal(rng, n), offset(rng));
            vec![
                cell(vec![(h.clone(), c)], with_inputs(vec![]), n),
                cell(vec![], with_inputs(vec![(-h, -c)]), n),
            ]
        }
        3 => {
            let h = random_normal(rng, n);
            let (mut c1, mut c2) = (offset(rng), offset(rng));
            if c1 > c2 {
                std::mem::swap(&mut c1, &mut c2);
            }
            if c2 - c1 < 1e-3 {
                c2 = c1 + 0.1 * p.init_radius;
            }
            vec![
                cell(vec![(h.clone(), c1)], with_inputs(vec![]), n),
                cell(vec![(h.clone(), c2)], with_inputs(vec![(-&h, -c1)]), n),
                cell(vec![], with_inputs(vec![(-h, -c2)]), n),
            ]
        }
        _ => loop {
            let (h1, c1) = (random_normal(rng, n), offset(rng));
            let (h2, c2) = (random_normal(rng, n), offset(rng));
            let lo1 = (h1.clone(), c1);
            let hi1 = (-&h1, -c1);
            let lo2 = (h2.clone(), c2);
            let hi2 = (-&h2, -c2);
            let cells = vec![
                cell(vec![lo1.clone(), lo2.clone()], with_inputs(vec![]), n),
                cell(vec![lo1], with_inputs(vec![hi2.clone()]), n),
                cell(vec![lo2], with_inputs(vec![hi1.clone()]), n),
                cell(vec![], with_inputs(vec![hi1, hi2]), n),
            ];
            if cells.iter().all(polyhedron_nonempty) {
                break cells;
            }
        },
    }
}

pub fn generate(p: &GenParams) -> Result<PwaSystem, BenchError> {
    p.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let cells = random_partition(&mut rng, p);
    let laws = (0..p.cells)
        .map(|_| random_stable_law(&mut rng, p))
        .collect();
    let input = Polyhedron::boxed(&[(-p.input_bound, p.input_bound)]);
    let mut init_box = vec![(-p.init_radius, p.init_radius); p.dim];
    init_box.push((-p.input_bound, p.input_bound));
    Ok(PwaSystem::new(
        p.dim,
        1,
        cells,
        laws,
        input,
        Polyhedron::boxed(&init_box),
    )?)
}

/// Spectral radius estimate `|A^k|^(1/k)` over doubling `k`, stopped when
/// successive estimates agree to `tol`.
pub fn power_radius(a: &DMatrix<f64>, tol: f64) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    // keep A^k normalized: log|A^k| = log_scale + log|m|
    let mut m = a.clone();
    let mut log_scale = 0.0f64;
    let mut k = 1u64;
    let mut prev = f64::INFINITY;
    for _ in 0..40 {
        let norm = m.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let est = ((log_scale + norm.ln()) / k as f64).exp();
        if (est - prev).abs() <= tol * est.max(1e-300) {
            return est;
        }
        prev = est;
        m /= norm;
        log_scale += norm.ln();
        // square: A^(2k) = (A^k)^2, scale doubles in log
        m = &m * &m;
        log_scale *= 2.0;
        k *= 2;
    }
    prev
}

/// Fraction of `samples` uniform points of the box `bounds` that lie in
/// some cell.
pub fn partition_coverage<R: Rng>(
    sys: &PwaSystem,
    bounds: &[(f64, f64)],
    samples: usize,
    rng: &mut R,
) -> f64 {
    if samples == 0 {
        return 1.0;
    }
    let hits = (0..samples)
        .filter(|_| {
            let z = DVector::from_iterator(
                bounds.len(),
                bounds.iter().map(|&(lo, hi)| rng.gen_range(lo..=hi)),
            );
            matches!(sys.cell_of_point(&z), Ok(Some(_)))
        })
        .count();
    hits as f64 / samples as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchParams {
    pub seed: u64,
    /// Template for each item; `dim`, `cells` and `seed` are redrawn per item.
    pub gen: GenParams,
    pub workers: usize,
    pub timeout: Duration,
    pub coverage_samples: usize,
}

impl Default for BatchParams {
    fn default() -> Self {
        Self {
            seed: 0,
            gen: GenParams::default(),
            workers: 0,
            timeout: Duration::from_secs(60),
            coverage_samples: 10_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemStatus {
    Accepted,
    ResidualRejected,
    Infeasible,
    Unknown,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchItem {
    pub index: usize,
    pub seed: u64,
    pub dim: usize,
    pub cells: usize,
    pub status: ItemStatus,
    pub objective: Option<f64>,
    pub time_s: f64,
    pub fireable_switches: usize,
    pub partition_ok: bool,
    pub stable_ok: bool,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchSummary {
    pub n: usize,
    pub seed: u64,
    pub accepted: usize,
    pub success_rate: f64,
    pub partition_ok: usize,
    pub stable_ok: usize,
    pub items: Vec<BatchItem>,
}

fn item_params(batch: &BatchParams, index: usize) -> GenParams {
    let mut rng = ChaCha8Rng::seed_from_u64(batch.seed);
    rng.set_stream(index as u64);
    GenParams {
        dim: rng.gen_range(1..=MAX_DIM),
        cells: rng.gen_range(1..=MAX_CELLS),
        seed: rng.gen(),
        ..batch.gen.clone()
    }
}

fn run_item(batch: &BatchParams, index: usize) -> BatchItem {
    let start = Instant::now();
    let p = item_params(batch, index);
    let mut item = BatchItem {
        index,
        seed: p.seed,
        dim: p.dim,
        cells: p.cells,
        status: ItemStatus::Error,
        objective: None,
        time_s: 0.0,
        fireable_switches: 0,
        partition_ok: false,
        stable_ok: false,
        error: None,
    };
    let sys = match generate(&p) {
        Ok(s) => s,
        Err(e) => {
            item.error = Some(e.to_string());
            item.time_s = start.elapsed().as_secs_f64();
            return item;
        }
    };
    item.stable_ok = sys.laws().iter().all(|l| power_radius(l.a(), 1e-9) < 1.0);
    let disjoint = matches!(cells_disjoint(&sys), Ok(v) if v.is_empty());
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed ^ 0x5eed);
    let covered = PolySampler::new(sys.init(), "initial set")
        .map(|s| partition_coverage(&sys, s.bounds(), batch.coverage_samples, &mut rng) >= 0.999)
        .unwrap_or(false);
    item.partition_ok = disjoint && covered;

    let mut opts = AnalyzeOptions::default();
    opts.solve.time_limit = Some(batch.timeout);
    match analyze(&sys, &opts) {
        Ok(outcome) => {
            item.fireable_switches = outcome.graph.count();
            item.objective = outcome.solution.objective;
            item.status = match &outcome.result {
                Ok(_) => ItemStatus::Accepted,
                Err(Rejection::NoSolution(SolveStatus::Infeasible)) => ItemStatus::Infeasible,
                Err(Rejection::NoSolution(_)) => ItemStatus::Unknown,
                Err(_) => ItemStatus::ResidualRejected,
            };
        }
        Err(e) => item.error = Some(e.to_string()),
    }
    item.time_s = start.elapsed().as_secs_f64();
    item
}

/// Generates and analyzes `n` systems. Item `k` depends only on the batch
/// seed and `k`; results are ordered by index.
pub fn run_batch(n: usize, batch: &BatchParams) -> BatchSummary {
    let work = || {
        (0..n)
            .into_par_iter()
            .map(|k| run_item(batch, k))
            .collect::<Vec<_>>()
    };
    let items = if batch.workers > 0 {
        match rayon::ThreadPoolBuilder::new()
            .num_threads(batch.workers)
            .build()
        {
            Ok(pool) => pool.install(work),
            Err(_) => work(),
        }
    } else {
        work()
    };
    let accepted = items
        .iter()
        .filter(|i| i.status == ItemStatus::Accepted)
        .count();
    BatchSummary {
        n,
        seed: batch.seed,
        accepted,
        success_rate: if n == 0 {
            0.0
        } else {
            accepted as f64 / n as f64
        },
        partition_ok: items.iter().filter(|i| i.partition_ok).count(),
        stable_ok: items.iter().filter(|i| i.stable_ok).count(),
        items,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stabilize_scaled_identity() {
        let a = stabilize(DMatrix::identity(3, 3) * 2.0, 0.9);
        let rho = power_radius(&a, 1e-12);
        assert!(rho < 0.9 && rho > 0.899);
        assert_eq!(stabilize(DMatrix::zeros(2, 2), 0.9), DMatrix::zeros(2, 2));
    }

    #[test]
    fn power_radius_matches_rotation() {
        // rotation by 90 degrees scaled by 0.5 has complex eigenvalues of modulus 0.5
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((power_radius(&a, 1e-12) - 0.5).abs() < 1e-9);
        assert!((spectral_radius(&a) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn single_cell_has_only_input_rows() {
        let sys = generate(&GenParams {
            cells: 1,
            ..GenParams::default()
        })
        .unwrap();
        assert_eq!(sys.cells()[0].n_strict(), 0);
        assert_eq!(sys.cells()[0].n_weak(), 2);
    }

    #[test]
    fn generation_is_deterministic() {
        let p = GenParams {
            dim: 3,
            cells: 4,
            seed: 11,
            ..GenParams::default()
        };
        assert_eq!(generate(&p).unwrap(), generate(&p).unwrap());
    }

    #[test]
    fn rejects_bad_params() {
        let bad = |f: fn(&mut GenParams)| {
            let mut p = GenParams::default();
            f(&mut p);
            generate(&p).unwrap_err()
        };
        assert_eq!(bad(|p| p.dim = 5), BenchError::Dim(5));
        assert_eq!(bad(|p| p.cells = 0), BenchError::Cells(0));
        assert_eq!(bad(|p| p.rho_target = 1.0), BenchError::Radius(1.0));
    }

    #[test]
    fn empty_batch() {
        let s = run_batch(0, &BatchParams::default());
        assert_eq!(s.n, 0);
        assert!(s.items.is_empty());
    }
}
