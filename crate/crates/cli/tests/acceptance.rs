//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::time::{Duration, Instant};

use common::*;
use nalgebra::{DMatrix, DVector};
use pwqlyap_core::bench::{run_batch, BatchParams};
use pwqlyap_core::certify::{audit, state_bounds, AuditInputs, AuditOptions};
use pwqlyap_core::feas::{build_switch_graph, switch_alternative, switch_fireable, Alternative};
use pwqlyap_core::frontend::{compile, interpret, parse, to_pwa};
use pwqlyap_core::pipeline::init_cells;
use pwqlyap_core::sdp::{assemble_program, implication_certified, min_eig, BlockKind};
use pwqlyap_core::{analyze, AnalyzeOptions, Certificate, PwaSystem};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    ok: bool,
    detail: String,
}

fn outcome(ok: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        ok,
        detail: detail.into(),
    }
}

fn accepted_running() -> (PwaSystem, Certificate, Duration) {
    let sys = running();
    let start = Instant::now();
    let out = analyze(&sys, &AnalyzeOptions::default()).expect("analysis runs");
    let elapsed = start.elapsed();
    let cert = out
        .certificate()
        .cloned()
        .unwrap_or_else(|| panic!("not accepted: {:?}", out.result));
    (sys, cert, elapsed)
}

fn switch_pruning() -> Outcome {
    let sys = running();
    let start = Instant::now();
    let fireable = switch_fireable(&sys, 1, 0).unwrap();
    let graph = build_switch_graph(&sys).unwrap();
    let elapsed = start.elapsed();
    let e = sys.switch_quadratization(1, 0).unwrap();
    let (residual, sum) = match switch_alternative(&sys, 1, 0).unwrap() {
        Alternative::Certificate(c) => (c.residual(&e), c.p_strict.iter().sum::<f64>()),
        _ => (f64::INFINITY, f64::NAN),
    };
    let ok = !fireable
        && !graph.get(1, 0)
        && residual <= 1e-8
        && (sum - 1.0).abs() <= 1e-8
        && elapsed.as_secs_f64() < 1.0;
    outcome(
        ok,
        format!(
            "fireable(2,1) = {fireable}, certificate residual {residual:.2e}, sum p_s = {sum:.12}, {:.3} s",
            elapsed.as_secs_f64()
        ),
    )
}

fn running_analysis() -> Outcome {
    let (_, cert, elapsed) = accepted_running();
    let obj = cert.alpha + cert.beta;
    let reference = REF_ALPHA + REF_BETA;
    let rel = (obj - reference).abs() / reference;
    let worst = cert.worst_residual().map_or(f64::INFINITY, |r| r.min_eig);
    let ok = cert.is_valid() && worst >= -1e-6 && elapsed.as_secs_f64() < 30.0;
    outcome(
        ok,
        format!(
            "alpha = {:.4}, beta = {:.4}, objective {obj:.4} vs {reference:.4} ({:.1}% off, soft target {}), \
             worst residual {worst:.2e}, {:.2} s",
            cert.alpha,
            cert.beta,
            100.0 * rel,
            if rel <= 0.25 { "met" } else { "missed" },
            elapsed.as_secs_f64()
        ),
    )
}

fn state_bound() -> Outcome {
    let (sys, cert, _) = accepted_running();
    let bounds = state_bounds(&cert);
    let r = cert.beta.sqrt();
    let shape_ok = bounds.len() == 3 && bounds.iter().all(|&(lo, hi)| hi == r && lo == -r);
    let report = audit(
        &cert,
        &sys,
        &AuditOptions {
            trials: 1000,
            steps: 50,
            seed: 1,
            inputs: AuditInputs::Uniform,
        },
    )
    .unwrap();
    let observed = report.max_abs_coordinate;
    let beta_matches = (cert.beta - REF_BETA).abs() <= 1e-3 * REF_BETA;
    let reference_ok = !beta_matches || (r - REF_COORD_BOUND).abs() < 5e-4;
    outcome(
        shape_ok && observed <= r && reference_ok,
        format!(
            "bound {r:.4}, largest simulated |coordinate| {observed:.4}; beta {} the reference within 0.1%{}",
            if beta_matches { "matches" } else { "does not match" },
            if beta_matches { format!(", bound vs {REF_COORD_BOUND}") } else { String::new() }
        ),
    )
}

fn monte_carlo() -> Outcome {
    let (sys, cert, _) = accepted_running();
    let opts = AuditOptions {
        trials: 10_000,
        steps: 50,
        seed: 0,
        inputs: AuditInputs::Uniform,
    };
    let report = audit(&cert, &sys, &opts).unwrap();
    let mut halved = cert.clone();
    halved.alpha /= 2.0;
    let control = audit(&halved, &sys, &opts).unwrap();
    outcome(
        report.is_clean() && report.points_checked == 500_000 && !control.is_clean(),
        format!(
            "{} points, {} violations; halved alpha: {} violations",
            report.points_checked,
            report.violations.len(),
            control.violations.len()
        ),
    )
}

fn quadratization_example() -> Outcome {
    let with_row = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 1.0, -1.0]);
    let without = DMatrix::from_row_slice(1, 2, &[1.0, -1.0]);
    let member = |e: &DMatrix<f64>, w: &DMatrix<f64>, x: f64| {
        let v = e * DVector::from_column_slice(&[1.0, x]);
        v.dot(&(w * &v)) >= 0.0
    };
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let x: f64 = rng.gen_range(-50.0..50.0);
        let w3: f64 = rng.gen_range(1e-3..10.0);
        let w = DMatrix::from_row_slice(2, 2, &[0.0, w3, w3, 0.0]);
        if member(&with_row, &w, x) != (x <= 1.0) {
            mismatches += 1;
        }
        let w_scalar = DMatrix::from_element(1, 1, rng.gen_range(0.0..10.0));
        if !member(&without, &w_scalar, x) {
            mismatches += 1;
        }
    }
    outcome(
        mismatches == 0,
        format!("{mismatches} mismatches over 10000 samples"),
    )
}

fn implication_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut counterexamples = 0;
    let mut certified = 0;
    let mut premises = 0;
    for t in 0..1000 {
        let n = 2 + t % 5;
        let sym = |rng: &mut ChaCha8Rng| {
            let m = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            (&m + m.transpose()) * 0.5
        };
        let a = sym(&mut rng);
        let b = sym(&mut rng);
        let g = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let c = &g * g.transpose() - &a - &b;
        if implication_certified(&a, &b, &c, 1e-9) {
            certified += 1;
        }
        for _ in 0..1000 {
            let y = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            if y.dot(&(&a * &y)) <= 0.0 && y.dot(&(&b * &y)) <= 0.0 {
                premises += 1;
                if y.dot(&(&c * &y)) < 0.0 {
                    counterexamples += 1;
                }
            }
        }
    }
    outcome(
        counterexamples == 0 && certified == 1000,
        format!("{counterexamples} counterexamples over {premises} premise points, {certified}/1000 triples certified"),
    )
}

fn published_solution() -> Outcome {
    let sys = running();
    let graph = build_switch_graph(&sys).unwrap();
    let prog = assemble_program(&sys, &graph, &init_cells(&sys).unwrap(), 0.0).unwrap();
    let x = published_point(&sys, &prog);
    let mut worst = f64::INFINITY;
    let mut parts = Vec::new();
    for kind in [
        BlockKind::Boundedness(0),
        BlockKind::Invariance(0, 1),
        BlockKind::Invariance(0, 2),
        BlockKind::Invariance(0, 3),
    ] {
        let k = prog.blocks.iter().position(|b| b.kind == kind).unwrap();
        let e = min_eig(&prog.block_matrix(k, &x));
        worst = worst.min(e);
        parts.push(format!("{kind}: {e:.4}"));
    }
    outcome(
        worst >= -1e-3,
        format!("min eigenvalues {}", parts.join(", ")),
    )
}

fn benchmark() -> Outcome {
    let start = Instant::now();
    let summary = run_batch(
        50,
        &BatchParams {
            seed: 7,
            ..BatchParams::default()
        },
    );
    let elapsed = start.elapsed();
    let ok = summary.success_rate >= 0.10
        && summary.partition_ok == summary.n
        && summary.stable_ok == summary.n
        && elapsed < Duration::from_secs(30 * 60);
    outcome(
        ok,
        format!(
            "{}/{} accepted ({:.0}%), partitions valid {}/{}, rho(A) < 1 {}/{}, {:.1} s",
            summary.accepted,
            summary.n,
            100.0 * summary.success_rate,
            summary.partition_ok,
            summary.n,
            summary.stable_ok,
            summary.n,
            elapsed.as_secs_f64()
        ),
    )
}

fn frontend_round_trip() -> Outcome {
    let sys = compile(RUNNING_PWQ).unwrap();
    let c1 = &sys.cells()[0];
    let c4 = &sys.cells()[3];
    let cells_ok = c1.strict_matrix() == &mat(2, 3, &[-9.0, 7.0, 6.0, -4.0, 8.0, -8.0])
        && c1.strict_rhs() == &vec(&[5.0, 4.0])
        && c1.weak_matrix() == &mat(2, 3, &[0.0, 0.0, 1.0, 0.0, 0.0, -1.0])
        && c1.weak_rhs() == &vec(&[3.0, 3.0])
        && c4.weak_matrix()
            == &mat(
                4,
                3,
                &[
                    9.0, -7.0, -6.0, 4.0, -8.0, 8.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0,
                ],
            )
        && c4.weak_rhs() == &vec(&[-5.0, -4.0, 3.0, 3.0]);
    let laws_ok =
        (0..4).all(|i| max_abs_diff(sys.homogeneous_law(i).unwrap().matrix(), &ref_f(i)) < 1e-12);

    let program = parse(RUNNING_PWQ).unwrap();
    let pwa = to_pwa(&program);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let x = DVector::from_fn(2, |_, _| rng.gen_range(-20.0..20.0));
        let u = DVector::from_element(1, rng.gen_range(-3.0..=3.0));
        let i = pwa
            .cell_of(&x, &u)
            .unwrap()
            .expect("partition covers the box");
        worst = worst.max((interpret(&program, &x, &u) - pwa.step(i, &x, &u).unwrap()).amax());
    }
    outcome(
        cells_ok && laws_ok && worst <= 1e-12,
        format!(
            "cell matrices {}, laws {}, interpretation gap {worst:.1e}",
            ok_word(cells_ok),
            ok_word(laws_ok)
        ),
    )
}

fn ok_word(b: bool) -> &'static str {
    if b {
        "match"
    } else {
        "differ"
    }
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 9] = [
        ("running-example switch pruning", switch_pruning),
        ("running-example analysis", running_analysis),
        ("derived state bound", state_bound),
        ("Monte-Carlo soundness", monte_carlo),
        ("quadratization exactness", quadratization_example),
        ("implication property suite", implication_suite),
        ("published-solution spot check", published_solution),
        ("benchmark harness", benchmark),
        ("frontend round trip", frontend_round_trip),
    ];
    let mut failed = 0;
    for (k, (name, run)) in criteria.iter().enumerate() {
        let o = run();
        if !o.ok {
            failed += 1;
        }
        println!(
            "criterion {}: {} - {name}: {}",
            k + 1,
            if o.ok { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
