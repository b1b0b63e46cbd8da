//! Prints block counts per offset for default synthetic plants.
//!
//! Arguments: plant count, points per block, sampling density.

use rosepoint_preprocess::{make_blocks, BlockSpec};
use rosepoint_synthgen::{generate_plant, sample_mesh, PlantParams, SAMPLING_DENSITY};

fn main() {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(3);
    let n_points: usize = std::env::args().nth(2).and_then(|s| s.parse().ok()).unwrap_or(4096);
    let density: f64 = std::env::args().nth(3).and_then(|s| s.parse().ok()).unwrap_or(SAMPLING_DENSITY);
    let spec = BlockSpec { n_points, ..BlockSpec::default() };
    let mut total = 0;
    for seed in 0..n {
        let mesh = generate_plant(&PlantParams::default(), seed).expect("plant");
        let cloud = sample_mesh(&mesh, density, seed).expect("cloud");
        let single = make_blocks(&cloud, &spec, &[0.0], seed).expect("blocks").len();
        let both = make_blocks(&cloud, &spec, &[0.0, 5.0], seed).expect("blocks").len();
        total += both;
        println!("seed {seed}: {} points, offset 0: {single} blocks, offsets 0+5: {both}", cloud.len());
    }
    println!("total {total}, train {}", total - (0.2 * total as f64).round() as usize);
}
