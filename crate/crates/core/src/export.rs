//! CSV output of nodal fields and meshes.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::SimplexMesh;
use crate::space::{CoefficientVector, GalerkinSpace};

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

fn coord_header(dim: usize) -> Vec<&'static str> {
    ["x", "y", "z"][..dim].to_vec()
}

/// One row `x, y[, z], u` per mesh vertex, boundary vertices included.
pub fn write_field<W: Write>(out: W, space: &GalerkinSpace, xi: &CoefficientVector) -> Result<()> {
    space.check(xi)?;
    let dim = space.space_dim();
    let nodal = space.nodal_values(&xi.xi);
    let mut w = csv::Writer::from_writer(out);
    let mut header = coord_header(dim);
    header.push("u");
    w.write_record(&header).map_err(csv_err)?;
    for (v, &u) in nodal.iter().enumerate() {
        let x = space.mesh().vertex(v);
        let mut row: Vec<String> = x[..dim].iter().map(|c| c.to_string()).collect();
        row.push(u.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_field_file(path: &Path, space: &GalerkinSpace, xi: &CoefficientVector) -> Result<()> {
    write_field(std::fs::File::create(path)?, space, xi)
}

/// `vertices.csv` (`x, y[, z], boundary`) and `elements.csv` (vertex
/// indices) in `dir`.
pub fn write_mesh(dir: &Path, mesh: &SimplexMesh) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let dim = mesh.dim();
    let mut w = csv::Writer::from_path(dir.join("vertices.csv")).map_err(csv_err)?;
    let mut header = coord_header(dim);
    header.push("boundary");
    w.write_record(&header).map_err(csv_err)?;
    for v in 0..mesh.num_vertices() {
        let mut row: Vec<String> = mesh.vertex(v)[..dim].iter().map(|c| c.to_string()).collect();
        row.push(u8::from(mesh.is_boundary(v)).to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(dir.join("elements.csv")).map_err(csv_err)?;
    let header: Vec<String> = (0..=dim).map(|a| format!("v{a}")).collect();
    w.write_record(&header).map_err(csv_err)?;
    for e in 0..mesh.num_elements() {
        w.write_record(mesh.element(e).iter().map(|v| v.to_string())).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}
