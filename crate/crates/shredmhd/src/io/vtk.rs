//! Legacy ASCII VTK structured-points export of cell-centered fields for
//! visualization. Fluid rows are scattered back onto the full grid; the
//! pipe interior takes a per-field fill value.

use std::fs;
use std::path::Path;

use shredmhd_core::mhdsim::Grid;

use crate::error::{io_err, AppError, Result};

pub struct VtkScalar<'a> {
    pub name: &'a str,
    /// One value per fluid row (snapshot layout).
    pub values: &'a [f64],
    /// Value painted into masked cells.
    pub fill: f64,
}

pub struct VtkVector<'a> {
    pub name: &'a str,
    pub x: &'a [f64],
    pub y: &'a [f64],
    pub z: &'a [f64],
    pub fill: [f64; 3],
}

/// Writes one frame of data as STRUCTURED_POINTS over the cell centers.
pub fn write_structured_points(
    path: &Path,
    title: &str,
    grid: &Grid,
    fluid_ids: &[usize],
    scalars: &[VtkScalar<'_>],
    vectors: &[VtkVector<'_>],
) -> Result<()> {
    let cells = grid.cell_count();
    for s in scalars {
        if s.values.len() != fluid_ids.len() {
            return Err(AppError::Config(format!(
                "scalar {} has {} values for {} fluid cells",
                s.name,
                s.values.len(),
                fluid_ids.len()
            )));
        }
    }
    for v in vectors {
        if v.x.len() != fluid_ids.len() || v.y.len() != fluid_ids.len() || v.z.len() != fluid_ids.len()
        {
            return Err(AppError::Config(format!(
                "vector {} component counts do not match fluid cells",
                v.name
            )));
        }
    }

    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\n");
    out.push_str(title);
    out.push('\n');
    out.push_str("ASCII\n");
    out.push_str("DATASET STRUCTURED_POINTS\n");
    out.push_str(&format!("DIMENSIONS {} {} {}\n", grid.nx, grid.ny, grid.nz));
    out.push_str(&format!(
        "ORIGIN {} {} {}\n",
        grid.x0 + 0.5 * grid.hx,
        grid.y0 + 0.5 * grid.hy,
        grid.z0 + 0.5 * grid.hz
    ));
    out.push_str(&format!("SPACING {} {} {}\n", grid.hx, grid.hy, grid.hz));
    out.push_str(&format!("POINT_DATA {cells}\n"));

    // Scatter helper: fluid rows onto the full grid.
    let scatter = |values: &[f64], fill: f64| -> Vec<f64> {
        let mut full = vec![fill; cells];
        for (row, &c) in fluid_ids.iter().enumerate() {
            full[c] = values[row];
        }
        full
    };

    for s in scalars {
        out.push_str(&format!("SCALARS {} double 1\n", s.name));
        out.push_str("LOOKUP_TABLE default\n");
        for v in scatter(s.values, s.fill) {
            out.push_str(&format!("{v}\n"));
        }
    }
    for v in vectors {
        out.push_str(&format!("VECTORS {} double\n", v.name));
        let fx = scatter(v.x, v.fill[0]);
        let fy = scatter(v.y, v.fill[1]);
        let fz = scatter(v.z, v.fill[2]);
        for c in 0..cells {
            out.push_str(&format!("{} {} {}\n", fx[c], fy[c], fz[c]));
        }
    }

    fs::write(path, out).map_err(io_err(path))
}

#[cfg(test)]
mod tests {
    use super::*;
    use shredmhd_core::mhdsim::{build_grid, Geometry};

    #[test]
    fn scalar_export_has_full_grid_with_fluid_values() {
        let grid = build_grid(&Geometry {
            resolution: (16, 16, 1),
            ..Geometry::default()
        })
        .unwrap();
        let fluid_ids = grid.fluid_cell_ids();
        let values: Vec<f64> = (0..fluid_ids.len()).map(|i| 600.0 + i as f64).collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.vtk");
        write_structured_points(
            &path,
            "temperature frame",
            &grid,
            &fluid_ids,
            &[VtkScalar {
                name: "T",
                values: &values,
                fill: 560.0,
            }],
            &[],
        )
        .unwrap();

        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.contains("DATASET STRUCTURED_POINTS"));
        assert!(text.contains("DIMENSIONS 16 16 1"));
        let data_lines: Vec<&str> = text
            .lines()
            .skip_while(|l| !l.starts_with("LOOKUP_TABLE"))
            .skip(1)
            .collect();
        assert_eq!(data_lines.len(), grid.cell_count());
        // Fluid cells carry their values; the pipe carries the fill.
        let non_fill = data_lines
            .iter()
            .filter(|l| l.parse::<f64>().unwrap() != 560.0)
            .count();
        assert_eq!(non_fill, grid.fluid_count());
    }

    #[test]
    fn mismatched_value_count_is_rejected() {
        let grid = build_grid(&Geometry {
            resolution: (16, 16, 1),
            ..Geometry::default()
        })
        .unwrap();
        let fluid_ids = grid.fluid_cell_ids();
        let dir = tempfile::tempdir().unwrap();
        let res = write_structured_points(
            &dir.path().join("bad.vtk"),
            "bad",
            &grid,
            &fluid_ids,
            &[VtkScalar {
                name: "T",
                values: &[1.0, 2.0],
                fill: 0.0,
            }],
            &[],
        );
        assert!(res.is_err());
    }
}
