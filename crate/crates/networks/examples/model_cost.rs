//! Parameter counts and forward/backward timings of every preset.
//!
//! `cargo run -q -p rosepoint-networks --example model_cost -- desk 4 [architecture]`

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rosepoint_networks::{build_model, Architecture, ModelSpec, Preset, TrainMask};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().collect();
    let preset: Preset = args.get(1).map(String::as_str).unwrap_or("desk").parse()?;
    let batch: usize = args.get(2).map(|s| s.parse()).transpose()?.unwrap_or(4);
    let only: Option<Architecture> = args.get(3).map(|s| s.parse()).transpose()?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for arch in Architecture::ALL.into_iter().filter(|a| only.is_none_or(|o| o == *a)) {
        let spec = ModelSpec::preset(arch, preset);
        let ckpt = build_model(&spec, 7)?;
        let blocks: Vec<Vec<[f64; 3]>> = (0..batch)
            .map(|_| (0..spec.n_points).map(|_| std::array::from_fn(|_| rng.random_range(-5.0..5.0))).collect())
            .collect();
        let labels: Vec<usize> = (0..batch * spec.n_points).map(|_| rng.random_range(0..3)).collect();
        let t = Instant::now();
        ckpt.scores(&blocks)?;
        let fwd = t.elapsed().as_secs_f64();
        let t = Instant::now();
        let step = ckpt.loss_and_gradients(&blocks, &labels, &TrainMask::All)?;
        let bwd = t.elapsed().as_secs_f64();
        println!(
            "{arch:<11} params {:>9}  eval {:>7.3}s  train step {:>7.3}s  loss {:.3}",
            ckpt.parameter_count(),
            fwd,
            bwd,
            step.loss
        );
    }
    Ok(())
}
