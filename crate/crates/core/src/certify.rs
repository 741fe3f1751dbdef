//! Working with certificates: sublevel membership, simulation, Monte-Carlo
//! audits and the state bounds implied by `beta`.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::feas::{bounding_box, FeasError};
use crate::model::{join_state_input, ModelError, Polyhedron, PwaSystem};
use crate::sdp::Certificate;

/// Absolute slack on every audited quadratic inequality is
/// `AUDIT_TOL * (1 + |(1, x, u)|^2)`.
pub const AUDIT_TOL: f64 = 1e-6;

const MAX_REJECTIONS: usize = 100_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CertifyError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Feas(#[from] FeasError),
    #[error("point lies outside every cell")]
    OutsidePartition,
    #[error("certificate has {cert} cells of dimension {cert_dim}, system has {system} cells of dimension {system_dim}")]
    Shape {
        cert: usize,
        cert_dim: usize,
        system: usize,
        system_dim: usize,
    },
    #[error("rejection sampling found no point of the {0} after {MAX_REJECTIONS} draws")]
    Sampling(&'static str),
}

fn check_shape(cert: &Certificate, sys: &PwaSystem) -> Result<(), CertifyError> {
    let cert_dim = cert.cells.first().map_or(sys.dim(), |c| c.q.len());
    if cert.cells.len() != sys.n_cells() || cert_dim != sys.dim() {
        return Err(CertifyError::Shape {
            cert: cert.cells.len(),
            cert_dim,
            system: sys.n_cells(),
            system_dim: sys.dim(),
        });
    }
    Ok(())
}

/// Containing cell and `V^i(x, u)`.
pub fn sublevel_value(
    cert: &Certificate,
    sys: &PwaSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<(usize, f64), CertifyError> {
    check_shape(cert, sys)?;
    let i = sys.cell_of(x, u)?.ok_or(CertifyError::OutsidePartition)?;
    Ok((i, cert.value(i, &join_state_input(x, u))))
}

pub fn sublevel_membership(
    cert: &Certificate,
    sys: &PwaSystem,
    x: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<bool, CertifyError> {
    Ok(sublevel_value(cert, sys, x, u)?.1 <= cert.alpha)
}

/// `[-sqrt(beta), sqrt(beta)]` for every coordinate of `(x, u)`.
pub fn state_bounds(cert: &Certificate) -> Vec<(f64, f64)> {
    let dim = cert.cells.first().map_or(0, |c| c.q.len());
    let r = cert.beta.max(0.0).sqrt();
    vec![(-r, r); dim]
}

/// Uniform draws from a bounded polyhedron: uniform in its bounding box,
/// rejected until inside.
#[derive(Debug, Clone)]
pub struct PolySampler {
    poly: Polyhedron,
    bounds: Vec<(f64, f64)>,
    what: &'static str,
}

impl PolySampler {
    pub fn new(poly: &Polyhedron, what: &'static str) -> Result<Self, CertifyError> {
        let bounds = if poly.dim() == 0 {
            Vec::new()
        } else {
            bounding_box(poly)?
        };
        Ok(Self {
            poly: poly.clone(),
            bounds,
            what,
        })
    }

    pub fn bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<DVector<f64>, CertifyError> {
        for _ in 0..MAX_REJECTIONS {
            let z = DVector::from_iterator(
                self.bounds.len(),
                self.bounds
                    .iter()
                    .map(|&(lo, hi)| if hi > lo { rng.gen_range(lo..=hi) } else { lo }),
            );
            if self.poly.contains(&z) {
                return Ok(z);
            }
        }
        Err(CertifyError::Sampling(self.what))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InputPolicy {
    Constant(DVector<f64>),
    /// Fresh uniform draw from the input polytope at every step.
    Uniform,
    Sequence(Vec<DVector<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    StepsExhausted,
    LeftPartition,
    InputsExhausted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub k: usize,
    pub cell: usize,
    pub x: DVector<f64>,
    pub u: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    /// State after the last recorded point (the point that left the
    /// partition, when that is the termination reason).
    pub last_state: DVector<f64>,
    pub termination: Termination,
}

/// Runs `steps` iterations from `x0`. The first input comes from the
/// policy like all others.
pub fn simulate<R: Rng>(
    sys: &PwaSystem,
    x0: &DVector<f64>,
    policy: &InputPolicy,
    steps: usize,
    rng: &mut R,
) -> Result<Trajectory, CertifyError> {
    let sampler = match policy {
        InputPolicy::Uniform => Some(PolySampler::new(sys.input_polytope(), "input polytope")?),
        _ => None,
    };
    let next_input = |k: usize, rng: &mut R| -> Result<Option<DVector<f64>>, CertifyError> {
        Ok(match policy {
            InputPolicy::Constant(u) => Some(u.clone()),
            InputPolicy::Uniform => Some(sampler.as_ref().expect("built above").sample(rng)?),
            InputPolicy::Sequence(seq) => seq.get(k).cloned(),
        })
    };
    let first = next_input(0, rng)?;
    run(
        sys,
        x0.clone(),
        first,
        steps,
        |k, rng| next_input(k, rng),
        rng,
    )
}

/// [`simulate`] with a ChaCha generator seeded from `seed`.
pub fn simulate_seeded(
    sys: &PwaSystem,
    x0: &DVector<f64>,
    policy: &InputPolicy,
    steps: usize,
    seed: u64,
) -> Result<Trajectory, CertifyError> {
    simulate(sys, x0, policy, steps, &mut ChaCha8Rng::seed_from_u64(seed))
}

fn run<R: Rng>(
    sys: &PwaSystem,
    mut x: DVector<f64>,
    first: Option<DVector<f64>>,
    steps: usize,
    mut next_input: impl FnMut(usize, &mut R) -> Result<Option<DVector<f64>>, CertifyError>,
    rng: &mut R,
) -> Result<Trajectory, CertifyError> {
    let mut points = Vec::with_capacity(steps);
    let mut u = first;
    for k in 0..steps {
        let Some(uk) = u.take() else {
            return Ok(Trajectory {
                points,
                last_state: x,
                termination: Termination::InputsExhausted,
            });
        };
        let Some(cell) = sys.cell_of(&x, &uk)? else {
            if k == 0 {
                return Err(CertifyError::OutsidePartition);
            }
            return Ok(Trajectory {
                points,
                last_state: x,
                termination: Termination::LeftPartition,
            });
        };
        let next = sys.step(cell, &x, &uk)?;
        points.push(TrajectoryPoint { k, cell, x, u: uk });
        x = next;
        if k + 1 < steps {
            u = next_input(k + 1, rng)?;
        }
    }
    Ok(Trajectory {
        points,
        last_state: x,
        termination: Termination::StepsExhausted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ViolationKind {
    Sublevel,
    NormBound,
    Partition,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub trial: usize,
    pub step: usize,
    pub kind: ViolationKind,
    /// Amount by which the inequality fails (0 for partition exits).
    pub excess: f64,
}

/// Inputs after the first, which is drawn together with the initial state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuditInputs {
    Uniform,
    HoldInitial,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditOptions {
    pub trials: usize,
    pub steps: usize,
    pub seed: u64,
    pub inputs: AuditInputs,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditReport {
    pub trials: usize,
    pub steps: usize,
    pub points_checked: usize,
    pub violations: Vec<Violation>,
    /// Largest `V - alpha` seen (negative when every point is strictly inside).
    pub max_sublevel_slack: f64,
    /// Largest `|(x, u)|^2 - beta` seen.
    pub max_norm_slack: f64,
    /// Largest `|coordinate|` seen over all audited points.
    pub max_abs_coordinate: f64,
}

impl AuditReport {
    fn empty(opts: &AuditOptions) -> Self {
        Self {
            trials: opts.trials,
            steps: opts.steps,
            points_checked: 0,
            violations: Vec::new(),
            max_sublevel_slack: f64::NEG_INFINITY,
            max_norm_slack: f64::NEG_INFINITY,
            max_abs_coordinate: 0.0,
        }
    }

    fn merge(mut self, other: AuditReport) -> Self {
        self.points_checked += other.points_checked;
        self.violations.extend(other.violations);
        self.max_sublevel_slack = self.max_sublevel_slack.max(other.max_sublevel_slack);
        self.max_norm_slack = self.max_norm_slack.max(other.max_norm_slack);
        self.max_abs_coordinate = self.max_abs_coordinate.max(other.max_abs_coordinate);
        self
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }
}

fn audit_trial(
    cert: &Certificate,
    sys: &PwaSystem,
    init: &PolySampler,
    inputs: Option<&PolySampler>,
    opts: &AuditOptions,
    trial: usize,
) -> Result<AuditReport, CertifyError> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    rng.set_stream(trial as u64);
    let d = sys.state_dim();
    let m = sys.input_dim();
    let z0 = init.sample(&mut rng)?;
    let x0 = z0.rows(0, d).into_owned();
    let u0 = z0.rows(d, m).into_owned();
    let held = u0.clone();
    let traj = run(
        sys,
        x0,
        Some(u0),
        opts.steps,
        |_, rng| match inputs {
            Some(s) => s.sample(rng).map(Some),
            None => Ok(Some(held.clone())),
        },
        &mut rng,
    )?;

    let mut report = AuditReport::empty(opts);
    for p in &traj.points {
        let z = join_state_input(&p.x, &p.u);
        let norm2 = z.norm_squared();
        let tol = AUDIT_TOL * (2.0 + norm2);
        let v_slack = cert.value(p.cell, &z) - cert.alpha;
        let n_slack = norm2 - cert.beta;
        report.points_checked += 1;
        report.max_sublevel_slack = report.max_sublevel_slack.max(v_slack);
        report.max_norm_slack = report.max_norm_slack.max(n_slack);
        report.max_abs_coordinate = report.max_abs_coordinate.max(z.amax());
        for (kind, slack) in [
            (ViolationKind::Sublevel, v_slack),
            (ViolationKind::NormBound, n_slack),
        ] {
            if slack > tol {
                report.violations.push(Violation {
                    trial,
                    step: p.k,
                    kind,
                    excess: slack,
                });
            }
        }
    }
    if traj.termination == Termination::LeftPartition {
        report.violations.push(Violation {
            trial,
            step: traj.points.len(),
            kind: ViolationKind::Partition,
            excess: 0.0,
        });
    }
    Ok(report)
}

/// Samples initial points from X⁰ and follows them under random admissible
/// inputs, recording every failure of `V <= alpha`, `|(x, u)|^2 <= beta`
/// and partition coverage. Deterministic for a fixed seed.
pub fn audit(
    cert: &Certificate,
    sys: &PwaSystem,
    opts: &AuditOptions,
) -> Result<AuditReport, CertifyError> {
    check_shape(cert, sys)?;
    if opts.trials == 0 {
        return Ok(AuditReport::empty(opts));
    }
    let init = PolySampler::new(sys.init(), "initial set")?;
    let inputs = match opts.inputs {
        AuditInputs::Uniform => Some(PolySampler::new(sys.input_polytope(), "input polytope")?),
        AuditInputs::HoldInitial => None,
    };
    let parts = (0..opts.trials)
        .into_par_iter()
        .map(|t| audit_trial(cert, sys, &init, inputs.as_ref(), opts, t))
        .collect::<Result<Vec<_>, _>>()?;
    let mut report = parts
        .into_iter()
        .fold(AuditReport::empty(opts), AuditReport::merge);
    report.violations.sort_by_key(|v| (v.trial, v.step));
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContourPoint {
    pub cell: usize,
    pub x: DVector<f64>,
}

/// Points of the level set `V^i = alpha` on rays from the origin through
/// the plane of the first two state coordinates (the first coordinate only
/// when `d = 1`), with the input fixed to `u`. Only points lying in the cell
/// whose function produced them are kept.
pub fn contour_samples(
    cert: &Certificate,
    sys: &PwaSystem,
    u: &DVector<f64>,
    rays: usize,
) -> Result<Vec<ContourPoint>, CertifyError> {
    check_shape(cert, sys)?;
    let d = sys.state_dim();
    if d == 0 {
        return Ok(Vec::new());
    }
    let z0 = join_state_input(&DVector::zeros(d), u);
    let mut out = Vec::new();
    let directions: Vec<DVector<f64>> = if d == 1 {
        vec![
            DVector::from_element(1, 1.0),
            DVector::from_element(1, -1.0),
        ]
    } else {
        (0..rays)
            .map(|r| {
                let theta = 2.0 * std::f64::consts::PI * r as f64 / rays as f64;
                let mut v = DVector::zeros(d);
                v[0] = theta.cos();
                v[1] = theta.sin();
                v
            })
            .collect()
    };
    for dir in directions {
        let dz = join_state_input(&dir, &DVector::zeros(u.len()));
        for (i, c) in cert.cells.iter().enumerate() {
            let a = (dz.transpose() * &c.p * &dz)[(0, 0)];
            let b = 2.0 * ((z0.transpose() * &c.p * &dz)[(0, 0)] + c.q.dot(&dz));
            let k = c.value(&z0) - cert.alpha;
            for t in positive_roots(a, b, k) {
                let z = &z0 + &dz * t;
                if sys.cells()[i].contains(&z) {
                    out.push(ContourPoint {
                        cell: i,
                        x: z.rows(0, d).into_owned(),
                    });
                }
            }
        }
    }
    Ok(out)
}

fn positive_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let roots = if a.abs() < 1e-14 {
        if b.abs() < 1e-14 {
            vec![]
        } else {
            vec![-c / b]
        }
    } else {
        let disc = b * b - 4.0 * a * c;
        if disc < 0.0 {
            vec![]
        } else {
            let s = disc.sqrt();
            vec![(-b - s) / (2.0 * a), (-b + s) / (2.0 * a)]
        }
    };
    roots
        .into_iter()
        .filter(|t| *t > 0.0 && t.is_finite())
        .collect()
}
