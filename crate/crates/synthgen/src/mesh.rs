use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use rosepoint_core::{OrganLabel, Point3};

use crate::{Result, SynthError};

/// Triangles at or below this area (cm²) are rejected.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

pub fn triangle_area(a: Point3, b: Point3, c: Point3) -> f64 {
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let x = u[1] * v[2] - u[2] * v[1];
    let y = u[2] * v[0] - u[0] * v[2];
    let z = u[0] * v[1] - u[1] * v[0];
    0.5 * (x * x + y * y + z * z).sqrt()
}

/// Triangle mesh of a single organ instance.
#[derive(Debug, Clone, PartialEq)]
pub struct OrganMesh {
    vertices: Vec<Point3>,
    triangles: Vec<[usize; 3]>,
    organ: OrganLabel,
}

impl OrganMesh {
    pub fn new(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>, organ: OrganLabel) -> Result<Self> {
        for (i, t) in triangles.iter().enumerate() {
            if let Some(&bad) = t.iter().find(|&&v| v >= vertices.len()) {
                return Err(SynthError::Mesh(format!("triangle {i} references vertex {bad} of {}", vertices.len())));
            }
            let area = triangle_area(vertices[t[0]], vertices[t[1]], vertices[t[2]]);
            if !(area > MIN_TRIANGLE_AREA) {
                return Err(SynthError::Mesh(format!("triangle {i} has area {area:e}")));
            }
        }
        Ok(OrganMesh { vertices, triangles, organ })
    }

    pub(crate) fn from_parts(vertices: Vec<Point3>, triangles: Vec<[usize; 3]>, organ: OrganLabel) -> Self {
        OrganMesh { vertices, triangles, organ }
    }

    pub fn vertices(&self) -> &[Point3] {
        &self.vertices
    }

    pub fn triangles(&self) -> &[[usize; 3]] {
        &self.triangles
    }

    pub fn organ(&self) -> OrganLabel {
        self.organ
    }

    pub fn triangle(&self, i: usize) -> [Point3; 3] {
        let [a, b, c] = self.triangles[i];
        [self.vertices[a], self.vertices[b], self.vertices[c]]
    }

    pub fn area(&self) -> f64 {
        (0..self.triangles.len()).map(|i| {
            let [a, b, c] = self.triangle(i);
            triangle_area(a, b, c)
        })
        .sum()
    }
}

/// A whole plant as a list of organ meshes.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantMesh {
    pub organs: Vec<OrganMesh>,
    pub seed: u64,
}

impl PlantMesh {
    pub fn triangle_count(&self) -> usize {
        self.organs.iter().map(|o| o.triangles.len()).sum()
    }

    /// Axis-aligned bounds over all vertices, or `None` for an empty mesh.
    pub fn bounds(&self) -> Option<(Point3, Point3)> {
        let mut it = self.organs.iter().flat_map(|o| o.vertices.iter());
        let first = *it.next()?;
        Some(it.fold((first, first), |(mut lo, mut hi), p| {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
            (lo, hi)
        }))
    }

    /// Extent along the vertical (z) axis.
    pub fn vertical_extent(&self) -> f64 {
        self.bounds().map_or(0.0, |(lo, hi)| hi[2] - lo[2])
    }

    /// Total triangle area per organ class, in `OrganLabel::ALL` order.
    pub fn organ_areas(&self) -> [f64; 7] {
        let mut out = [0.0; 7];
        for o in &self.organs {
            let k = OrganLabel::ALL.iter().position(|&l| l == o.organ).unwrap_or(0);
            out[k] += o.area();
        }
        out
    }
}

/// Sum of all triangle areas in cm².
pub fn mesh_area(mesh: &PlantMesh) -> f64 {
    mesh.organs.iter().map(OrganMesh::area).sum()
}

/// Writes the union of all organs as an OFF file.
pub fn write_off(mesh: &PlantMesh, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io = |source| SynthError::Dataset { path: path.to_path_buf(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let n_vertices: usize = mesh.organs.iter().map(|o| o.vertices.len()).sum();
    writeln!(out, "OFF\n{} {} 0", n_vertices, mesh.triangle_count()).map_err(io)?;
    for p in mesh.organs.iter().flat_map(|o| o.vertices.iter()) {
        writeln!(out, "{:.6} {:.6} {:.6}", p[0], p[1], p[2]).map_err(io)?;
    }
    let mut offset = 0;
    for o in &mesh.organs {
        for t in &o.triangles {
            writeln!(out, "3 {} {} {}", t[0] + offset, t[1] + offset, t[2] + offset).map_err(io)?;
        }
        offset += o.vertices.len();
    }
    out.flush().map_err(io)
}
