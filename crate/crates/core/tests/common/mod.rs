//! Running-example fixtures and published reference values.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use pwqlyap_core::io::system_from_json;
use pwqlyap_core::PwaSystem;

pub const RUNNING_JSON: &str = include_str!("../../examples/running.json");
pub const RUNNING_PWQ: &str = include_str!("../../examples/running.pwq");

pub const REF_ALPHA: f64 = 242.0155;
pub const REF_BETA: f64 = 2173.8501;
pub const REF_COORD_BOUND: f64 = 46.6154;

pub fn running() -> PwaSystem {
    system_from_json(RUNNING_JSON).expect("running example parses")
}

pub fn mat(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(rows, cols, data)
}

pub fn vec(data: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(data)
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    (a - b).amax()
}

/// Homogeneous law matrices `F^1..F^4` as printed (4 decimals).
pub fn ref_f(i: usize) -> DMatrix<f64> {
    let data: [[f64; 16]; 4] = [
        [
            1.0, 0.0, 0.0, 0.0, 0.0, 0.4217, 0.1077, 0.5661, -1.0, 0.1162, 0.2785, 0.2235, 0.0,
            0.0, 0.0, 1.0,
        ],
        [
            1.0, 0.0, 0.0, 0.0, 0.0, 0.4763, 0.0145, 0.9033, 9.0, 0.1315, 0.3291, 0.1459, 0.0, 0.0,
            0.0, 1.0,
        ],
        [
            1.0, 0.0, 0.0, 0.0, -4.0, 0.2618, 0.1177, 0.0868, 4.0, 0.4014, 0.4161, 0.6320, 0.0,
            0.0, 0.0, 1.0,
        ],
        [
            1.0, 0.0, 0.0, 0.0, 10.0, 0.3874, 0.0771, 0.5153, 7.0, 0.2430, 0.4028, 0.4790, 0.0,
            0.0, 0.0, 1.0,
        ],
    ];
    mat(4, 4, &data[i])
}

/// `E^1` as printed.
pub fn ref_e1() -> DMatrix<f64> {
    mat(
        5,
        4,
        &[
            1.0, 0.0, 0.0, 0.0, //
            5.0, 9.0, -7.0, -6.0, //
            4.0, 4.0, -8.0, 8.0, //
            3.0, 0.0, 0.0, -1.0, //
            3.0, 0.0, 0.0, 1.0,
        ],
    )
}

/// Strict and weak rows of the alternative system for the switch from the
/// second cell to the first, as printed (no constant row, no repeated input
/// bounds).
pub fn ref_e21() -> (DMatrix<f64>, DMatrix<f64>) {
    let strict = mat(
        3,
        4,
        &[
            5.0, 9.0, -7.0, -6.0, //
            -68.0, 0.8532, -2.5748, 10.446, //
            -58.0, 3.3662, -2.1732, 1.1084,
        ],
    );
    let weak = mat(
        3,
        4,
        &[
            -4.0, -4.0, 8.0, -8.0, //
            3.0, 0.0, 0.0, -1.0, //
            3.0, 0.0, 0.0, 1.0,
        ],
    );
    (strict, weak)
}

/// Published switch matrix `L` (row `i` = source cell).
pub const REF_SWITCHES: [[bool; 4]; 4] = [
    [true, true, true, true],
    [false, true, false, true],
    [true, false, true, true],
    [true, true, true, true],
];

pub fn ref_p(i: usize) -> DMatrix<f64> {
    let data: [[f64; 9]; 4] = [
        [
            1.0181, -0.0040, -1.1332, -0.0040, 1.0268, -0.5340, -1.1332, -0.5340, -13.7623,
        ],
        [
            9.1540, -7.0159, -2.6659, -7.0159, 9.5054, -2.4016, -2.6659, -2.4016, -8.9741,
        ],
        [
            1.1555, -0.3599, -2.6224, -0.3599, 2.4558, -2.8236, -2.6224, -2.8236, -2.3852,
        ],
        [
            3.7314, -3.4179, -3.1427, -3.4179, 6.1955, 0.9499, -3.1427, 0.9499, -10.6767,
        ],
    ];
    mat(3, 3, &data[i])
}

pub fn ref_q(i: usize) -> DVector<f64> {
    let data: [[f64; 3]; 4] = [
        [0.1252, 1.3836, -29.6791],
        [-21.3830, -44.6291, 114.2984],
        [-5.3138, 6.7894, -40.5537],
        [28.5011, -73.5421, 48.2153],
    ];
    vec(&data[i])
}

pub fn ref_w1() -> DMatrix<f64> {
    mat(
        5,
        5,
        &[
            63.0218, 0.0163, 0.0217, 12.1557, 8.8835, //
            0.0163, 0.0000, 0.0000, 0.0267, 0.0031, //
            0.0217, 0.0000, 0.0000, 0.0094, 0.0061, //
            12.1557, 0.0267, 0.0094, 4.2011, 59.5733, //
            8.8835, 0.0031, 0.0061, 59.5733, 3.0416,
        ],
    )
}

/// Published `U^{12}`, `U^{13}`, `U^{14}` (target cell index 1, 2, 3).
pub fn ref_u1(j: usize) -> DMatrix<f64> {
    let data: [[f64; 49]; 3] = [
        [
            2.1068, 0.4134, 0.0545, 1.4664, 0.1882, 2.3955, 2.4132, //
            0.4134, 0.0008, 0.0047, 0.0009, 0.0819, 0.5474, 0.0484, //
            0.0545, 0.0047, 0.0050, 0.0147, 0.0097, 0.1442, 0.2316, //
            1.4664, 0.0009, 0.0147, 0.0041, 0.3383, 0.8776, 0.0999, //
            0.1882, 0.0819, 0.0097, 0.3383, 0.0675, 0.4405, 0.4172, //
            2.3955, 0.5474, 0.1442, 0.8776, 0.4405, 8.1215, 9.6346, //
            2.4132, 0.0484, 0.2316, 0.0999, 0.4172, 9.6346, 0.9532,
        ],
        [
            0.3570, 0.2243, 0.0031, 0.0050, 0.1431, 0.0388, 0.7675, //
            0.2243, 0.0201, 0.0023, 0.0050, 0.1730, 0.0494, 0.1577, //
            0.0031, 0.0023, 0.0001, 0.0001, 0.0071, 0.0006, 0.0088, //
            0.0050, 0.0050, 0.0001, 0.0002, 0.3563, 0.0009, 0.0168, //
            0.1431, 0.1730, 0.0071, 0.3563, 0.0527, 0.2689, 0.8979, //
            0.0388, 0.0494, 0.0006, 0.0009, 0.2689, 0.0137, 0.1542, //
            0.7675, 0.1577, 0.0088, 0.0168, 0.8979, 0.1542, 0.2747,
        ],
        [
            1.3530, 0.1912, 0.0280, 0.1178, 2.9171, 0.7079, 1.4104, //
            0.1912, 0.0512, 0.0068, 0.0326, 1.7179, 0.3764, 0.6045, //
            0.0280, 0.0068, 0.0022, 0.0048, 0.1396, 0.0264, 0.0679, //
            0.1178, 0.0326, 0.0048, 0.0409, 0.5231, 0.1204, 0.2390, //
            2.9171, 1.7179, 0.1396, 0.5231, 15.0992, 5.1148, 14.3581, //
            0.7079, 0.3764, 0.0264, 0.1204, 5.1148, 0.5102, 1.6230, //
            1.4104, 0.6045, 0.0679, 0.2390, 14.3581, 1.6230, 1.2985,
        ],
    ];
    mat(7, 7, &data[j - 1])
}

/// Indices of the rows of `e` that are not exact repeats of an earlier row.
pub fn distinct_rows(e: &DMatrix<f64>) -> Vec<usize> {
    let mut keep: Vec<usize> = Vec::new();
    for r in 0..e.nrows() {
        if !keep.iter().any(|&k| e.row(k) == e.row(r)) {
            keep.push(r);
        }
    }
    keep
}

/// Whether every row of `want` matches some row of `have` within `tol`.
pub fn rows_covered(want: &DMatrix<f64>, have: &DMatrix<f64>, tol: f64) -> bool {
    (0..want.nrows()).all(|r| (0..have.nrows()).any(|k| (want.row(r) - have.row(k)).amax() <= tol))
}

fn put_sym(x: &mut [f64], var: &pwqlyap_core::sdp::SymVar, m: &DMatrix<f64>) {
    for b in 0..var.size {
        for a in 0..=b {
            x[var.index(a, b)] = m[(a, b)];
        }
    }
}

/// Variable vector carrying the published `alpha`, `beta`, `P^i`, `q^i`,
/// `W^1` and `U^{12}`, `U^{13}`, `U^{14}`; everything else is zero.
///
/// The published `U^{1j}` are indexed by the distinct rows of `E^{1j}`:
/// the pulled-back input bounds repeat the source cell's own input rows and
/// get a zero multiplier.
pub fn published_point(sys: &PwaSystem, program: &pwqlyap_core::ConicProgram) -> Vec<f64> {
    use pwqlyap_core::sdp::{ALPHA, BETA};
    let layout = &program.layout;
    let mut x = vec![0.0; program.n_vars()];
    x[ALPHA] = REF_ALPHA;
    x[BETA] = REF_BETA;
    for i in 0..4 {
        put_sym(&mut x, &layout.p[i], &ref_p(i));
        let q = ref_q(i);
        for k in 0..3 {
            x[layout.q[i] + k] = q[k];
        }
    }
    put_sym(&mut x, &layout.w[0], &ref_w1());
    for j in 1..4 {
        let e = sys.switch_quadratization(0, j).unwrap();
        let keep = distinct_rows(e.matrix());
        let u = ref_u1(j);
        assert_eq!(keep.len(), u.nrows(), "distinct rows of E^(1,{})", j + 1);
        let mut full = DMatrix::zeros(e.rows(), e.rows());
        for (a, &ra) in keep.iter().enumerate() {
            for (b, &rb) in keep.iter().enumerate() {
                full[(ra, rb)] = u[(a, b)];
            }
        }
        put_sym(&mut x, &layout.u[&(0, j)], &full);
    }
    x
}
