//! Legacy ASCII VTK snapshots and a lossless CSV mesh archive.

use nalgebra::{Point2, Vector2};
use std::io::Write as _;
use std::path::Path;

/// Write a triangle mesh with named point data as legacy ASCII VTK.
pub fn write_vtk(
    path: &Path,
    vertices: &[Point2<f64>],
    triangles: &[[usize; 3]],
    scalars: &[(&str, &[f64])],
    vectors: &[(&str, &[Vector2<f64>])],
) -> std::io::Result<()> {
    let mut out = String::new();
    out.push_str("# vtk DataFile Version 3.0\nmemdarcy snapshot\nASCII\n");
    out.push_str("DATASET UNSTRUCTURED_GRID\n");
    out.push_str(&format!("POINTS {} double\n", vertices.len()));
    for v in vertices {
        out.push_str(&format!("{} {} 0\n", v.x, v.y));
    }
    out.push_str(&format!("CELLS {} {}\n", triangles.len(), 4 * triangles.len()));
    for t in triangles {
        out.push_str(&format!("3 {} {} {}\n", t[0], t[1], t[2]));
    }
    out.push_str(&format!("CELL_TYPES {}\n", triangles.len()));
    for _ in triangles {
        out.push_str("5\n");
    }
    if !scalars.is_empty() || !vectors.is_empty() {
        out.push_str(&format!("POINT_DATA {}\n", vertices.len()));
    }
    for (name, values) in scalars {
        assert_eq!(values.len(), vertices.len());
        out.push_str(&format!("SCALARS {name} double 1\nLOOKUP_TABLE default\n"));
        for v in *values {
            out.push_str(&format!("{v}\n"));
        }
    }
    for (name, values) in vectors {
        assert_eq!(values.len(), vertices.len());
        out.push_str(&format!("VECTORS {name} double\n"));
        for v in *values {
            out.push_str(&format!("{} {} 0\n", v.x, v.y));
        }
    }
    std::fs::write(path, out)
}

/// Archive a mesh as two CSV files (`<stem>_vertices.csv`,
/// `<stem>_triangles.csv`) with the scenario hash in each header.
pub fn write_mesh_csv(
    dir: &Path,
    stem: &str,
    vertices: &[Point2<f64>],
    triangles: &[[usize; 3]],
    scenario_hash: &str,
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut vf = std::fs::File::create(dir.join(format!("{stem}_vertices.csv")))?;
    writeln!(vf, "# scenario={scenario_hash}")?;
    writeln!(vf, "index,x,y")?;
    for (i, v) in vertices.iter().enumerate() {
        writeln!(vf, "{i},{},{}", v.x, v.y)?;
    }
    let mut tf = std::fs::File::create(dir.join(format!("{stem}_triangles.csv")))?;
    writeln!(tf, "# scenario={scenario_hash}")?;
    writeln!(tf, "index,v0,v1,v2")?;
    for (i, t) in triangles.iter().enumerate() {
        writeln!(tf, "{i},{},{},{}", t[0], t[1], t[2])?;
    }
    Ok(())
}

/// Read a mesh archive back; returns an error if the stored scenario hash
/// differs from the expected one.
pub fn read_mesh_csv(
    dir: &Path,
    stem: &str,
    scenario_hash: &str,
) -> std::io::Result<(Vec<Point2<f64>>, Vec<[usize; 3]>)> {
    let bad = |msg: String| std::io::Error::new(std::io::ErrorKind::InvalidData, msg);
    let read = |name: String| -> std::io::Result<Vec<Vec<String>>> {
        let text = std::fs::read_to_string(dir.join(&name))?;
        let mut lines = text.lines();
        let header = lines.next().unwrap_or_default();
        let stored = header.strip_prefix("# scenario=").unwrap_or_default();
        if stored != scenario_hash {
            return Err(bad(format!(
                "{name}: scenario hash '{stored}' does not match '{scenario_hash}'"
            )));
        }
        Ok(lines
            .skip(1)
            .map(|l| l.split(',').map(str::to_string).collect())
            .collect())
    };
    let mut vertices = Vec::new();
    for row in read(format!("{stem}_vertices.csv"))? {
        if row.len() != 3 {
            return Err(bad(format!("vertex row with {} fields", row.len())));
        }
        let x = row[1].parse().map_err(|e| bad(format!("vertex x: {e}")))?;
        let y = row[2].parse().map_err(|e| bad(format!("vertex y: {e}")))?;
        vertices.push(Point2::new(x, y));
    }
    let mut triangles = Vec::new();
    for row in read(format!("{stem}_triangles.csv"))? {
        if row.len() != 4 {
            return Err(bad(format!("triangle row with {} fields", row.len())));
        }
        let parse = |s: &String| s.parse::<usize>().map_err(|e| bad(format!("index: {e}")));
        triangles.push([parse(&row[1])?, parse(&row[2])?, parse(&row[3])?]);
    }
    Ok((vertices, triangles))
}
