//! Fixtures shared by the criterion benchmarks.

use pwqlyap_core::bench::{generate, GenParams};
use pwqlyap_core::io::system_from_json;
use pwqlyap_core::PwaSystem;

const RUNNING_JSON: &str = include_str!("../../core/examples/running.json");

pub fn running_example() -> PwaSystem {
    system_from_json(RUNNING_JSON).expect("bundled running example is valid")
}

/// Generated system with `dim` states and `cells` cells.
pub fn generated(dim: usize, cells: usize, seed: u64) -> PwaSystem {
    generate(&GenParams {
        dim,
        cells,
        seed,
        ..GenParams::default()
    })
    .expect("valid generator parameters")
}
