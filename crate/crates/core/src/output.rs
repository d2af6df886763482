//! Field registry, legacy VTK frames and CSV tables.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::damage::{ConductivityField, DamageField};
use crate::error::{Error, Result};
use crate::mesh::Mesh;

/// Every exportable field. Nodal fields live on mesh nodes, the rest on
/// elements (centroids).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Field {
    T,
    #[serde(rename = "u_x")]
    Ux,
    #[serde(rename = "u_y")]
    Uy,
    #[serde(rename = "d")]
    Damage,
    #[serde(rename = "d1")]
    D1,
    #[serde(rename = "d2")]
    D2,
    #[serde(rename = "k_x")]
    Kx,
    #[serde(rename = "k_y")]
    Ky,
    #[serde(rename = "J_x")]
    Jx,
    #[serde(rename = "J_y")]
    Jy,
}

impl Field {
    pub const ALL: [Field; 10] = [
        Field::T,
        Field::Ux,
        Field::Uy,
        Field::Damage,
        Field::D1,
        Field::D2,
        Field::Kx,
        Field::Ky,
        Field::Jx,
        Field::Jy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Field::T => "T",
            Field::Ux => "u_x",
            Field::Uy => "u_y",
            Field::Damage => "d",
            Field::D1 => "d1",
            Field::D2 => "d2",
            Field::Kx => "k_x",
            Field::Ky => "k_y",
            Field::Jx => "J_x",
            Field::Jy => "J_y",
        }
    }

    pub fn is_nodal(self) -> bool {
        matches!(self, Field::T | Field::Ux | Field::Uy)
    }

    pub fn parse(name: &str) -> Result<Field> {
        Field::ALL
            .into_iter()
            .find(|f| f.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown field '{name}'")))
    }
}

/// Borrowed view of everything a frame can contain.
#[derive(Debug, Clone, Copy)]
pub struct FrameData<'a> {
    pub temperature: &'a [f64],
    /// Interleaved `(u_x, u_y)` per node.
    pub displacement: &'a [f64],
    pub damage: &'a DamageField,
    pub conductivity: &'a ConductivityField,
    pub heat_flux: &'a [[f64; 2]],
}

impl FrameData<'_> {
    /// Values of `field` on its support (nodes or elements).
    pub fn values(&self, field: Field) -> Vec<f64> {
        match field {
            Field::T => self.temperature.to_vec(),
            Field::Ux => self.displacement.iter().step_by(2).copied().collect(),
            Field::Uy => self.displacement.iter().skip(1).step_by(2).copied().collect(),
            Field::Damage => self.damage.scalar.clone(),
            Field::D1 => self.damage.tensor.iter().map(|d| d.d1).collect(),
            Field::D2 => self.damage.tensor.iter().map(|d| d.d2).collect(),
            Field::Kx => self.conductivity.kx.clone(),
            Field::Ky => self.conductivity.ky.clone(),
            Field::Jx => self.heat_flux.iter().map(|j| j[0]).collect(),
            Field::Jy => self.heat_flux.iter().map(|j| j[1]).collect(),
        }
    }
}

/// Nine significant digits with a two-digit signed exponent; negative zero
/// prints as zero.
pub fn format_number(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    let s = format!("{v:.8e}");
    let (mantissa, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exp.abs())
}

/// Legacy ASCII unstructured grid with the requested fields.
pub fn vtk_string(mesh: &Mesh, data: &FrameData, fields: &[Field], title: &str) -> String {
    let mut out = String::new();
    let title: String = title.chars().filter(|c| *c != '\n').take(255).collect();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str(&title);
    out.push('\n');
    out.push_str("ASCII\nDATASET UNSTRUCTURED_GRID\n");
    let _ = writeln!(out, "POINTS {} double", mesh.num_nodes());
    for p in mesh.nodes() {
        let _ = writeln!(out, "{} {} {}", format_number(p[0]), format_number(p[1]), format_number(0.0));
    }
    let ne = mesh.num_elements();
    let _ = writeln!(out, "CELLS {} {}", ne, 5 * ne);
    for c in mesh.elements() {
        let _ = writeln!(out, "4 {} {} {} {}", c[0], c[1], c[2], c[3]);
    }
    let _ = writeln!(out, "CELL_TYPES {ne}");
    for _ in 0..ne {
        out.push_str("9\n");
    }
    let mut sorted: Vec<Field> = fields.to_vec();
    sorted.sort();
    sorted.dedup();
    let _ = writeln!(out, "POINT_DATA {}", mesh.num_nodes());
    for f in sorted.iter().filter(|f| f.is_nodal()) {
        write_scalars(&mut out, f.name(), &data.values(*f));
    }
    let _ = writeln!(out, "CELL_DATA {ne}");
    for f in sorted.iter().filter(|f| !f.is_nodal()) {
        write_scalars(&mut out, f.name(), &data.values(*f));
    }
    out
}

fn write_scalars(out: &mut String, name: &str, values: &[f64]) {
    let _ = writeln!(out, "SCALARS {name} double 1");
    out.push_str("LOOKUP_TABLE default\n");
    for &v in values {
        out.push_str(&format_number(v));
        out.push('\n');
    }
}

pub fn write_vtk(path: &Path, mesh: &Mesh, data: &FrameData, fields: &[Field], title: &str) -> Result<()> {
    std::fs::write(path, vtk_string(mesh, data, fields, title)).map_err(|e| Error::io(path, e))
}

/// Streaming CSV table with a fixed header.
#[derive(Debug, Clone)]
pub struct CsvTable {
    text: String,
    columns: usize,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        let mut text = header.iter().map(|h| quote(h)).collect::<Vec<_>>().join(",");
        text.push('\n');
        CsvTable {
            text,
            columns: header.len(),
        }
    }

    pub fn push(&mut self, cells: &[String]) {
        assert_eq!(cells.len(), self.columns, "row width differs from the header");
        self.text.push_str(&cells.iter().map(|c| quote(c)).collect::<Vec<_>>().join(","));
        self.text.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, &self.text).map_err(|e| Error::io(path, e))
    }
}

fn quote(cell: &str) -> String {
    if cell.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", cell.replace('"', "\"\""))
    } else {
        cell.to_string()
    }
}
