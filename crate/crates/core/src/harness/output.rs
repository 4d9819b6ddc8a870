//! CSV time series and legacy ASCII VTK snapshots.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::diagnostics::StepReport;
use crate::error::{Error, Result};
use crate::mesh::SimplicialMesh;

pub const SERIES_HEADER: &str = "t,mass,energy,dissipation,forcing_work,mass_residual,energy_slack,newton_iters";

/// One row per report. `{}` formatting of `f64` is the shortest string that
/// parses back to the same value.
pub fn series_csv(rows: &[StepReport]) -> String {
    let with_entropy = rows.iter().any(|r| r.entropy.is_some());
    let mut out = String::from(SERIES_HEADER);
    if with_entropy {
        out.push_str(",entropy");
    }
    out.push('\n');
    for r in rows {
        let _ = write!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.time,
            r.mass,
            r.energy,
            r.dissipation,
            r.forcing_work,
            r.mass_balance_residual,
            r.energy_balance_slack,
            r.newton_iterations
        );
        if with_entropy {
            let _ = write!(out, ",{}", r.entropy.unwrap_or(f64::NAN));
        }
        out.push('\n');
    }
    out
}

/// Rows of a series written every `stride` steps (and at the last step).
/// Per-step quantities are summed over the skipped steps, so the energy
/// slack of a row is the slack of the whole window since the previous row;
/// `newton_iters` is the window maximum.
pub fn thin_series(reports: &[StepReport], stride: usize) -> Vec<StepReport> {
    let stride = stride.max(1);
    let mut rows = Vec::new();
    let mut acc: Option<StepReport> = None;
    for (i, r) in reports.iter().enumerate() {
        let merged = match acc.take() {
            None => r.clone(),
            Some(a) => StepReport {
                dissipation: a.dissipation + r.dissipation,
                forcing_work: a.forcing_work + r.forcing_work,
                forcing_mass: a.forcing_mass + r.forcing_mass,
                energy_balance_slack: a.energy_balance_slack + r.energy_balance_slack,
                newton_iterations: a.newton_iterations.max(r.newton_iterations),
                ..r.clone()
            },
        };
        if r.step % stride == 0 || i + 1 == reports.len() {
            rows.push(merged);
        } else {
            acc = Some(merged);
        }
    }
    rows
}

pub fn write_series(path: &Path, rows: &[StepReport]) -> Result<()> {
    fs::write(path, series_csv(rows))?;
    Ok(())
}

/// Parses a series file back into `(header, rows)`.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::invalid("empty csv file"))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .filter(|l| !l.is_empty())
        .map(|l| {
            l.split(',')
                .map(|v| {
                    if v.is_empty() {
                        Ok(f64::NAN)
                    } else {
                        v.parse::<f64>().map_err(|e| Error::invalid(format!("bad csv value '{v}': {e}")))
                    }
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, rows))
}

pub fn snapshot_name(step: usize) -> String {
    format!("fields_{step:05}.vtk")
}

/// Writes a legacy ASCII VTK unstructured grid with the given point scalars.
/// Values carry 17 significant digits.
pub fn write_vtk(path: &Path, mesh: &SimplicialMesh, title: &str, fields: &[(&str, &[f64])]) -> Result<()> {
    let nv = mesh.num_vertices();
    for (name, values) in fields {
        if values.len() != nv {
            return Err(Error::invalid(format!("field {name} has {} values for {nv} vertices", values.len())));
        }
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "{}", title.replace('\n', " "))?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET UNSTRUCTURED_GRID")?;
    writeln!(w, "POINTS {nv} double")?;
    for v in 0..nv {
        let x = mesh.vertex(v);
        let z = if x.len() > 2 { x[2] } else { 0.0 };
        writeln!(w, "{:.16e} {:.16e} {:.16e}", x[0], x[1], z)?;
    }
    let k = mesh.vertices_per_cell();
    let nc = mesh.num_cells();
    writeln!(w, "CELLS {nc} {}", nc * (k + 1))?;
    for cell in mesh.cells() {
        write!(w, "{k}")?;
        for v in cell {
            write!(w, " {v}")?;
        }
        writeln!(w)?;
    }
    // 5 = VTK_TRIANGLE, 10 = VTK_TETRA
    let cell_type = if mesh.dim() == 2 { 5 } else { 10 };
    writeln!(w, "CELL_TYPES {nc}")?;
    for _ in 0..nc {
        writeln!(w, "{cell_type}")?;
    }
    writeln!(w, "POINT_DATA {nv}")?;
    for (name, values) in fields {
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in values.iter() {
            writeln!(w, "{v:.16e}")?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Contents of a VTK file written by [`write_vtk`].
#[derive(Debug, Clone, PartialEq)]
pub struct VtkData {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub scalars: Vec<(String, Vec<f64>)>,
}

pub fn read_vtk(path: &Path) -> Result<VtkData> {
    let text = fs::read_to_string(path)?;
    let mut tokens = text.lines().skip(4).flat_map(str::split_whitespace);
    let bad = |what: &str| Error::invalid(format!("malformed vtk file: {what}"));
    let mut next = || tokens.next().ok_or_else(|| bad("unexpected end"));
    let num = |t: &str| t.parse::<f64>().map_err(|_| bad(t));
    let count = |t: &str| t.parse::<usize>().map_err(|_| bad(t));

    let mut data = VtkData {
        points: Vec::new(),
        cells: Vec::new(),
        scalars: Vec::new(),
    };
    if next()? != "POINTS" {
        return Err(bad("expected POINTS"));
    }
    let nv = count(next()?)?;
    next()?;
    for _ in 0..nv {
        let p = [num(next()?)?, num(next()?)?, num(next()?)?];
        data.points.push(p);
    }
    if next()? != "CELLS" {
        return Err(bad("expected CELLS"));
    }
    let nc = count(next()?)?;
    next()?;
    for _ in 0..nc {
        let k = count(next()?)?;
        let cell = (0..k).map(|_| next().and_then(count)).collect::<Result<Vec<_>>>()?;
        data.cells.push(cell);
    }
    if next()? != "CELL_TYPES" {
        return Err(bad("expected CELL_TYPES"));
    }
    for _ in 0..=nc {
        next()?;
    }
    if next()? != "POINT_DATA" {
        return Err(bad("expected POINT_DATA"));
    }
    next()?;
    while let Ok(tok) = next() {
        if tok != "SCALARS" {
            return Err(bad("expected SCALARS"));
        }
        let name = next()?.to_string();
        next()?;
        next()?;
        next()?;
        next()?;
        let values = (0..nv).map(|_| next().and_then(num)).collect::<Result<Vec<_>>>()?;
        data.scalars.push((name, values));
    }
    Ok(data)
}
