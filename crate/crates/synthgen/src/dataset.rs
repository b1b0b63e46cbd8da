use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rosepoint_core::{derive_seed, save_cloud};

use crate::{generate_plant, sample_mesh, PlantParams, Result, SynthError, SAMPLING_DENSITY};

pub const MANIFEST_FILE: &str = "manifest.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Validation,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Validation => "validation",
        })
    }
}

impl FromStr for Split {
    type Err = SynthError;

    fn from_str(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            other => Err(SynthError::Manifest(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub file: String,
    pub seed: u64,
    pub split: Split,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn files(&self, split: Split) -> impl Iterator<Item = &str> {
        self.entries.iter().filter(move |e| e.split == split).map(|e| e.file.as_str())
    }

    pub fn count(&self, split: Split) -> usize {
        self.files(split).count()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("file,seed,split\n");
        for e in &self.entries {
            out.push_str(&format!("{},{},{}\n", e.file, e.seed, e.split));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Manifest> {
        let mut lines = text.lines();
        if lines.next().map(str::trim) != Some("file,seed,split") {
            return Err(SynthError::Manifest("missing header file,seed,split".into()));
        }
        let mut entries = Vec::new();
        for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.trim().split(',').collect();
            let [file, seed, split] = fields[..] else {
                return Err(SynthError::Manifest(format!("line {}: expected 3 fields", i + 2)));
            };
            let seed = seed.parse().map_err(|_| SynthError::Manifest(format!("line {}: bad seed {seed:?}", i + 2)))?;
            entries.push(ManifestEntry { file: file.to_string(), seed, split: split.parse()? });
        }
        Ok(Manifest { entries })
    }
}

pub fn read_manifest(dir: impl AsRef<Path>) -> Result<Manifest> {
    let path = dir.as_ref().join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|source| SynthError::Dataset { path, source })?;
    Manifest::from_csv(&text)
}

/// Number of validation plants: the last `ceil(n / 6)`.
pub fn validation_count(n_plants: usize) -> usize {
    n_plants.div_ceil(6)
}

/// Generates `n_plants` plants sampled at the default density.
pub fn generate_dataset(n_plants: usize, params: &PlantParams, seed: u64, out_dir: impl AsRef<Path>) -> Result<Manifest> {
    generate_dataset_with_density(n_plants, params, seed, SAMPLING_DENSITY, out_dir)
}

pub fn generate_dataset_with_density(
    n_plants: usize,
    params: &PlantParams,
    seed: u64,
    density: f64,
    out_dir: impl AsRef<Path>,
) -> Result<Manifest> {
    if n_plants == 0 {
        return Err(SynthError::InvalidParams("n_plants must be at least 1".into()));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|source| SynthError::Dataset { path: out_dir.to_path_buf(), source })?;
    let first_validation = n_plants - validation_count(n_plants);
    let mut manifest = Manifest::default();
    for i in 0..n_plants {
        let plant_seed = derive_seed(seed, i as u64);
        let mesh = generate_plant(params, plant_seed)?;
        let mut cloud = sample_mesh(&mesh, density, derive_seed(plant_seed, u64::MAX))?;
        let file = format!("plant_{i:03}.xyzl");
        cloud.name = file.trim_end_matches(".xyzl").to_string();
        save_cloud(&cloud, out_dir.join(&file))?;
        let split = if i >= first_validation { Split::Validation } else { Split::Train };
        manifest.entries.push(ManifestEntry { file, seed: plant_seed, split });
    }
    let path = out_dir.join(MANIFEST_FILE);
    fs::write(&path, manifest.to_csv()).map_err(|source| SynthError::Dataset { path, source })?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ceiling_rule() {
        assert_eq!(validation_count(48), 8);
        assert_eq!(validation_count(6), 1);
        assert_eq!(validation_count(7), 2);
        assert_eq!(validation_count(1), 1);
    }

    #[test]
    fn manifest_round_trip() {
        let m = Manifest {
            entries: vec![
                ManifestEntry { file: "a.xyzl".into(), seed: 3, split: Split::Train },
                ManifestEntry { file: "b.xyzl".into(), seed: u64::MAX, split: Split::Validation },
            ],
        };
        assert_eq!(Manifest::from_csv(&m.to_csv()).unwrap(), m);
        assert!(Manifest::from_csv("x,y\n").is_err());
    }
}
