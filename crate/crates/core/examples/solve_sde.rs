//! Solves `dX = -0.5 X dt + (1 + 0.5 sin X) dL` along one driver path and
//! prints the running `Z` process that controls the solution.
//!
//! ```bash
//! cargo run --release --example solve_sde
//! ```

use std::sync::Arc;

use siilab::sde::{solve_sde, z_process};
use siilab::simulate::simulate_sii;
use siilab::{LocalCharacteristics, RngStream, SdeSpec, TimeGrid};

fn main() -> siilab::Result<()> {
    let chars = LocalCharacteristics::mixed();
    let grid = Arc::new(TimeGrid::uniform(1.0, 20)?);
    let spec = SdeSpec::parse(0.0, "-0.5 * x", "1 + 0.5 * sin(x)").expect("valid coefficients");

    let l = simulate_sii(&chars, grid, RngStream::new(3, 0))?;
    let x = solve_sde(&spec, &l)?;
    let z = z_process(&spec, &chars, &x)?;

    println!("{:>6} {:>10} {:>10} {:>10}", "t", "L", "X", "Z");
    for (k, t) in x.times().iter().enumerate() {
        println!("{t:6.2} {:10.4} {:10.4} {:10.4}", l.values()[k], x.values()[k], z.total()[k]);
    }
    for j in x.jumps() {
        println!("jump of X at t = {:.4}: {:+.4}", j.time, j.size);
    }
    Ok(())
}
