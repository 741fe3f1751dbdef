mod common;

use common::*;
use nalgebra::DVector;
use pwqlyap_core::frontend::{compile, interpret, parse, to_pwa};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn listing_compiles_to_printed_matrices() {
    let sys = compile(RUNNING_PWQ).unwrap();
    assert_eq!(sys.n_cells(), 4);
    assert_eq!(sys.cell_quadratization(0).unwrap().matrix(), &ref_e1());
    for i in 0..4 {
        assert!(max_abs_diff(sys.homogeneous_law(i).unwrap().matrix(), &ref_f(i)) < 1e-12);
    }
    let c4 = &sys.cells()[3];
    assert_eq!(
        c4.weak_matrix(),
        &mat(
            4,
            3,
            &[9.0, -7.0, -6.0, 4.0, -8.0, 8.0, 0.0, 0.0, 1.0, 0.0, 0.0, -1.0]
        )
    );
    assert_eq!(c4.weak_rhs(), &vec(&[-5.0, -4.0, 3.0, 3.0]));
    assert_eq!(sys, running());
}

#[test]
fn interpretation_agrees_with_step() {
    let program = parse(RUNNING_PWQ).unwrap();
    let sys = to_pwa(&program);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let x = DVector::from_fn(2, |_, _| rng.gen_range(-20.0..20.0));
        let u = DVector::from_element(1, rng.gen_range(-3.0..=3.0));
        let i = sys
            .cell_of(&x, &u)
            .unwrap()
            .expect("cells cover the input range");
        let a = interpret(&program, &x, &u);
        let b = sys.step(i, &x, &u).unwrap();
        assert!((a - b).amax() <= 1e-12);
    }
}

#[test]
fn malformed_programs_are_rejected() {
    for bad in [
        "x in [0, 1]; while (true) { x = x * x; }",
        "x in [0, 1]; while (true) { x = y; }",
        "x in [0, 1]; while (true) { x = x + 1 }",
        "x in [0, 1]; while (true) { x = x; x = 2 * x; }",
    ] {
        assert!(compile(bad).is_err(), "{bad}");
    }
}
