//! Export in the sparse SDPA text format.
//!
//! SDPA reads `min cᵀx  s.t.  sum_v x_v F_v - F_0 ⪰ 0` with block-diagonal
//! `F`. Each LMI block of the program is one SDPA block (in program order),
//! followed by a diagonal block holding the multiplier nonnegativity. Entries
//! are upper-triangular, 1-based, sorted by (matrix, block, row, column).

use std::io::{self, Write};

use super::ConicProgram;
use crate::io::format_f64;

pub fn write_sdpa<W: Write>(program: &ConicProgram, out: &mut W) -> io::Result<()> {
    let n = program.n_vars();
    let mult = program.layout.multipliers();
    let lp_block = !mult.is_empty();
    let n_blocks = program.blocks.len() + usize::from(lp_block);

    writeln!(
        out,
        "* piecewise quadratic invariant program, margin {}",
        format_f64(program.margin)
    )?;
    writeln!(out, "{n}")?;
    writeln!(out, "{n_blocks}")?;
    let mut sizes: Vec<String> = program
        .blocks
        .iter()
        .map(|b| b.size().to_string())
        .collect();
    if lp_block {
        sizes.push(format!("-{}", mult.len()));
    }
    writeln!(out, "{}", sizes.join(" "))?;
    let c: Vec<String> = program.objective().iter().map(|&v| format_f64(v)).collect();
    writeln!(out, "{}", c.join(" "))?;

    // (matno, blkno, i, j, value), all 1-based except matno 0 for F_0
    let mut entries: Vec<(usize, usize, usize, usize, f64)> = Vec::new();
    for (k, block) in program.blocks.iter().enumerate() {
        let size = block.size();
        for col in 0..size {
            for row in 0..=col {
                let shift = if row == col {
                    program.block_margin(k)
                } else {
                    0.0
                };
                let f0 = -(block.constant[(row, col)] - shift);
                if f0 != 0.0 {
                    entries.push((0, k + 1, row + 1, col + 1, f0));
                }
                for (v, coeff) in &block.terms {
                    let value = coeff[(row, col)];
                    if value != 0.0 {
                        entries.push((v + 1, k + 1, row + 1, col + 1, value));
                    }
                }
            }
        }
    }
    if lp_block {
        for (pos, v) in mult.clone().enumerate() {
            entries.push((v + 1, n_blocks, pos + 1, pos + 1, 1.0));
        }
    }
    entries.sort_by_key(|e| (e.0, e.1, e.2, e.3));
    for (mat, blk, i, j, v) in entries {
        writeln!(out, "{mat} {blk} {i} {j} {}", format_f64(v))?;
    }
    Ok(())
}

pub fn to_sdpa(program: &ConicProgram) -> String {
    let mut buf = Vec::new();
    write_sdpa(program, &mut buf).expect("writing to memory cannot fail");
    String::from_utf8(buf).expect("ASCII output")
}
