//! Synthetic rosebush generation.
//!
//! A stochastic bracketed L-system is derived from [`PlantParams`] and
//! interpreted by a 3D turtle into organ-labeled triangle meshes. Meshes are
//! turned into labeled point clouds by area-weighted uniform surface sampling.

pub mod dataset;
pub mod error;
mod geometry;
pub mod lsystem;
pub mod mesh;
pub mod params;
pub mod sample;

pub use dataset::{generate_dataset, generate_dataset_with_density, read_manifest, Manifest, ManifestEntry, Split};
pub use error::SynthError;
pub use lsystem::generate_plant;
pub use mesh::{mesh_area, triangle_area, write_off, OrganMesh, PlantMesh};
pub use params::PlantParams;
pub use sample::{sample_mesh, sample_mesh_traced, TriangleRef, SAMPLING_DENSITY};

pub type Result<T> = std::result::Result<T, SynthError>;
