use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rosepoint_core::{LabeledPointCloud, PartLabel, Point3};

use crate::mesh::triangle_area;
use crate::{PlantMesh, Result, SynthError};

/// Default surface sampling density in points per cm².
pub const SAMPLING_DENSITY: f64 = 120.0;

/// Source triangle of a sampled point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TriangleRef {
    pub organ: usize,
    pub triangle: usize,
}

/// Samples `round(density * area)` points uniformly over the mesh surface.
pub fn sample_mesh(mesh: &PlantMesh, density: f64, seed: u64) -> Result<LabeledPointCloud> {
    sample_mesh_traced(mesh, density, seed).map(|(cloud, _)| cloud)
}

/// Like [`sample_mesh`], also returning the source triangle of every point.
pub fn sample_mesh_traced(mesh: &PlantMesh, density: f64, seed: u64) -> Result<(LabeledPointCloud, Vec<TriangleRef>)> {
    if !(density > 0.0 && density.is_finite()) {
        return Err(SynthError::Sampling(format!("density must be positive, got {density}")));
    }
    let mut refs = Vec::new();
    let mut cdf = Vec::new();
    let mut total = 0.0;
    for (o, organ) in mesh.organs.iter().enumerate() {
        for t in 0..organ.triangles().len() {
            let [a, b, c] = organ.triangle(t);
            total += triangle_area(a, b, c);
            cdf.push(total);
            refs.push(TriangleRef { organ: o, triangle: t });
        }
    }
    if !(total > 0.0) {
        return Err(SynthError::Sampling("mesh has zero surface area".into()));
    }
    let count = (density * total).round() as usize;
    if count == 0 {
        return Err(SynthError::Sampling(format!("density {density} yields no points for area {total}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut positions: Vec<Point3> = Vec::with_capacity(count);
    let mut labels: Vec<PartLabel> = Vec::with_capacity(count);
    let mut sources = Vec::with_capacity(count);
    for _ in 0..count {
        let target = rng.random::<f64>() * total;
        let k = cdf.partition_point(|&c| c <= target).min(cdf.len() - 1);
        let r = refs[k];
        let organ = &mesh.organs[r.organ];
        let [a, b, c] = organ.triangle(r.triangle);
        let (mut u, mut v): (f64, f64) = (rng.random(), rng.random());
        if u + v > 1.0 {
            u = 1.0 - u;
            v = 1.0 - v;
        }
        positions.push(std::array::from_fn(|i| a[i] + u * (b[i] - a[i]) + v * (c[i] - a[i])));
        labels.push(organ.organ().part());
        sources.push(r);
    }
    let cloud = LabeledPointCloud::new(format!("plant_{}", mesh.seed), positions, Some(labels))?;
    Ok((cloud, sources))
}
