//! JSON interchange for systems and certificates.
//!
//! Matrices are arrays of rows. Output goes through [`to_canonical_json`],
//! which fixes key order (struct order) and prints every float with 17
//! significant digits so identical inputs give byte-identical files.

use std::io;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};
use thiserror::Error;

use crate::model::{AffineLaw, ModelError, Polyhedron, PwaSystem};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("malformed JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("ragged matrix in {0}")]
    Ragged(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|r| m.row(r).iter().copied().collect())
        .collect()
}

/// Rows to a matrix with a known column count (needed for empty blocks).
pub fn rows_to_matrix(
    rows: &[Vec<f64>],
    ncols: usize,
    what: &str,
) -> Result<DMatrix<f64>, IoError> {
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(IoError::Ragged(what.to_string()));
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |r, c| rows[r][c]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolyhedronJson {
    #[serde(rename = "Ts", default)]
    pub ts: Vec<Vec<f64>>,
    #[serde(default)]
    pub cs: Vec<f64>,
    #[serde(rename = "Tw", default)]
    pub tw: Vec<Vec<f64>>,
    #[serde(default)]
    pub cw: Vec<f64>,
}

impl PolyhedronJson {
    pub fn from_polyhedron(p: &Polyhedron) -> Self {
        Self {
            ts: matrix_to_rows(p.strict_matrix()),
            cs: p.strict_rhs().iter().copied().collect(),
            tw: matrix_to_rows(p.weak_matrix()),
            cw: p.weak_rhs().iter().copied().collect(),
        }
    }

    pub fn to_polyhedron(&self, dim: usize, what: &str) -> Result<Polyhedron, IoError> {
        Ok(Polyhedron::new(
            rows_to_matrix(&self.ts, dim, &format!("{what}.Ts"))?,
            DVector::from_vec(self.cs.clone()),
            rows_to_matrix(&self.tw, dim, &format!("{what}.Tw"))?,
            DVector::from_vec(self.cw.clone()),
        )?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LawJson {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b_in: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemJson {
    pub d: usize,
    pub m: usize,
    pub cells: Vec<PolyhedronJson>,
    pub laws: Vec<LawJson>,
    pub input: PolyhedronJson,
    pub init: PolyhedronJson,
}

impl SystemJson {
    pub fn from_system(sys: &PwaSystem) -> Self {
        Self {
            d: sys.state_dim(),
            m: sys.input_dim(),
            cells: sys
                .cells()
                .iter()
                .map(PolyhedronJson::from_polyhedron)
                .collect(),
            laws: sys
                .laws()
                .iter()
                .map(|l| LawJson {
                    a: matrix_to_rows(l.a()),
                    b_in: matrix_to_rows(l.b()),
                    b: l.offset().iter().copied().collect(),
                })
                .collect(),
            input: PolyhedronJson::from_polyhedron(sys.input_polytope()),
            init: PolyhedronJson::from_polyhedron(sys.init()),
        }
    }

    pub fn to_system(&self) -> Result<PwaSystem, IoError> {
        let (d, m) = (self.d, self.m);
        let cells = self
            .cells
            .iter()
            .enumerate()
            .map(|(i, c)| c.to_polyhedron(d + m, &format!("cells[{i}]")))
            .collect::<Result<Vec<_>, _>>()?;
        let laws = self
            .laws
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let a = rows_to_matrix(&l.a, d, &format!("laws[{i}].A"))?;
                // a d x 0 input matrix may be written as [] instead of [[], ...]
                let b_in = if m == 0 && l.b_in.is_empty() {
                    DMatrix::zeros(d, 0)
                } else {
                    rows_to_matrix(&l.b_in, m, &format!("laws[{i}].B"))?
                };
                Ok(AffineLaw::new(a, b_in, DVector::from_vec(l.b.clone()))?)
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        let input = self.input.to_polyhedron(m, "input")?;
        let init = self.init.to_polyhedron(d + m, "init")?;
        Ok(PwaSystem::new(d, m, cells, laws, input, init)?)
    }
}

pub fn system_from_json(text: &str) -> Result<PwaSystem, IoError> {
    let dto: SystemJson = serde_json::from_str(text)?;
    dto.to_system()
}

pub fn system_to_json(sys: &PwaSystem) -> String {
    to_canonical_json(&SystemJson::from_system(sys))
}

/// Pretty printer that writes floats as `d.dddddddddddddddde±x`.
struct CanonicalFormatter<'a> {
    inner: PrettyFormatter<'a>,
}

impl Formatter for CanonicalFormatter<'_> {
    fn write_f64<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{}", format_f64(value))
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_array(writer)
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array(writer)
    }

    fn begin_array_value<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_array_value(writer, first)
    }

    fn end_array_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_array_value(writer)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object(writer)
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object(writer)
    }

    fn begin_object_key<W: ?Sized + io::Write>(
        &mut self,
        writer: &mut W,
        first: bool,
    ) -> io::Result<()> {
        self.inner.begin_object_key(writer, first)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.begin_object_value(writer)
    }

    fn end_object_value<W: ?Sized + io::Write>(&mut self, writer: &mut W) -> io::Result<()> {
        self.inner.end_object_value(writer)
    }
}

/// 17 significant digits in scientific notation; valid JSON for finite values.
/// Negative zero prints as zero.
pub fn format_f64(value: f64) -> String {
    let value = if value == 0.0 { 0.0 } else { value };
    format!("{value:.16e}")
}

pub fn to_canonical_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let formatter = CanonicalFormatter {
        inner: PrettyFormatter::with_indent(b"  "),
    };
    let mut ser = serde_json::Serializer::with_formatter(&mut out, formatter);
    value
        .serialize(&mut ser)
        .expect("serializing to memory cannot fail");
    out.push(b'\n');
    String::from_utf8(out).expect("serde_json emits UTF-8")
}
