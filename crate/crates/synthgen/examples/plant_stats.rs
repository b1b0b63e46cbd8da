//! Prints height, area, point count and class split for a range of seeds.

use rosepoint_synthgen::{generate_plant, mesh_area, PlantParams, SAMPLING_DENSITY};

fn main() {
    let params = PlantParams::default();
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(48);
    let mut totals = [0.0; 3];
    for seed in 0..n {
        let mesh = generate_plant(&params, seed).expect("generation");
        let areas = mesh.organ_areas();
        let area = mesh_area(&mesh);
        let leaf = areas[0];
        let stem = areas[1] + areas[2] + areas[3];
        let flower = areas[4] + areas[5] + areas[6];
        totals[0] += leaf / area;
        totals[1] += stem / area;
        totals[2] += flower / area;
        println!(
            "seed {seed:3} height {:5.1} area {:7.1} points {:7.0} leaf {:4.1}% stem {:4.1}% flower {:4.1}%",
            mesh.vertical_extent(),
            area,
            area * SAMPLING_DENSITY,
            100.0 * leaf / area,
            100.0 * stem / area,
            100.0 * flower / area
        );
    }
    let n = n as f64;
    println!("mean leaf {:.1}% stem {:.1}% flower {:.1}%", 100.0 * totals[0] / n, 100.0 * totals[1] / n, 100.0 * totals[2] / n);
}
