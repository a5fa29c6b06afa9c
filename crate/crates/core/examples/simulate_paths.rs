//! Samples paths of a jump diffusion with independent increments and writes
//! the first one to CSV.
//!
//! ```bash
//! cargo run --release --example simulate_paths
//! ```

use std::sync::Arc;

use siilab::simulate::Sampler;
use siilab::{JumpSizes, LevyMeasure, LocalCharacteristics, RngStream, TimeGrid};

fn main() -> siilab::Result<()> {
    // drift 0.5, unit diffusion, rate-2 jumps uniform on [-1, 1]
    let chars = LocalCharacteristics::constant(
        0.5,
        1.0,
        LevyMeasure::finite(2.0, JumpSizes::Uniform { low: -1.0, high: 1.0 }),
    );
    let grid = Arc::new(TimeGrid::uniform(1.0, 100)?);
    let sampler = Sampler::new(&chars, grid)?;

    let mut rng = RngStream::new(7, 0).rng();
    let paths: Vec<_> = (0..1000).map(|_| sampler.sample(&mut rng)).collect();

    let mean_end = paths.iter().map(|p| p.terminal()).sum::<f64>() / paths.len() as f64;
    let mean_jumps = paths.iter().map(|p| p.jumps().len()).sum::<usize>() as f64 / paths.len() as f64;
    println!("E[L_1] ~ {mean_end:.3} (exact 0.5), jumps per path ~ {mean_jumps:.2} (exact 2)");

    let first = &paths[0];
    first.write_values(std::io::stdout().lock())?;
    println!("-- jumps --");
    first.write_jumps(std::io::stdout().lock())?;
    Ok(())
}
