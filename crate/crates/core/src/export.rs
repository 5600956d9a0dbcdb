//! Legacy VTK output of the discrete surfaces.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::assembly::Discretization;
use crate::cut::cut_element_in;
use crate::element::BasisScratch;
use crate::error::Result;
use crate::levelset::Vec3;

/// Which surface to write.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SurfaceKind {
    /// The piecewise planar zero level of `phi_hat_h`.
    Linear,
    /// Its image under `Theta_h` (triangle corners mapped).
    Deformed,
}

/// Writes the cut triangles as `POLYDATA`, with an optional nodal field
/// sampled at the triangle corners.
pub fn write_surface_vtk(
    disc: &Discretization,
    kind: SurfaceKind,
    field: Option<(&str, &[f64])>,
    path: &Path,
) -> Result<()> {
    let mesh = &disc.mesh;
    let refel = mesh.reference_element();
    let mut s = BasisScratch::new(refel);
    let mut points: Vec<Vec3> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut tris: Vec<[usize; 3]> = Vec::new();
    for e in 0..mesh.num_elements() {
        let tet = mesh.tet(e);
        let local = disc.map.local(mesh, e);
        for tri in cut_element_in(&tet, &disc.dls.vertex_values(mesh, e)) {
            let base = points.len();
            for lambda in &tri {
                let t = local.eval(refel, lambda, &mut s);
                points.push(match kind {
                    SurfaceKind::Linear => t.x,
                    SurfaceKind::Deformed => t.y,
                });
                if let Some((_, u)) = field {
                    values.push(mesh.dofs(e).iter().enumerate().map(|(i, &d)| u[d] * s.values[i]).sum());
                }
            }
            tris.push([base, base + 1, base + 2]);
        }
    }

    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "# vtk DataFile Version 3.0")?;
    writeln!(w, "discrete surface")?;
    writeln!(w, "ASCII")?;
    writeln!(w, "DATASET POLYDATA")?;
    writeln!(w, "POINTS {} double", points.len())?;
    for p in &points {
        writeln!(w, "{:.17e} {:.17e} {:.17e}", p.x, p.y, p.z)?;
    }
    writeln!(w, "POLYGONS {} {}", tris.len(), 4 * tris.len())?;
    for t in &tris {
        writeln!(w, "3 {} {} {}", t[0], t[1], t[2])?;
    }
    if let Some((name, _)) = field {
        writeln!(w, "POINT_DATA {}", points.len())?;
        writeln!(w, "SCALARS {name} double 1")?;
        writeln!(w, "LOOKUP_TABLE default")?;
        for v in &values {
            writeln!(w, "{v:.17e}")?;
        }
    }
    w.flush()?;
    Ok(())
}
