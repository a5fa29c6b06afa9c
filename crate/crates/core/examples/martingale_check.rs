//! Martingale tests for the exponential test processes `M^f` of a driver and
//! `K^g` of a solution, and what happens when the solver's drift is wrong.
//!
//! ```bash
//! cargo run --release --example martingale_check
//! ```

use std::sync::Arc;

use rayon::prelude::*;
use siilab::martingale::{KgBuilder, MartingaleTest, MfBuilder, TestFunction};
use siilab::rng::Role;
use siilab::sde::solve_sde;
use siilab::simulate::Sampler;
use siilab::{CadlagPath, LocalCharacteristics, RngStream, SdeSpec, TimeGrid};

fn main() -> siilab::Result<()> {
    let chars = LocalCharacteristics::mixed();
    let grid = Arc::new(TimeGrid::uniform(1.0, 100)?);
    let sampler = Sampler::new(&chars, grid.clone())?;
    let drivers: Vec<CadlagPath> = (0..5000u64)
        .into_par_iter()
        .map(|i| sampler.sample(&mut RngStream::for_role(1, Role::Driver, i).rng()))
        .collect();
    let test = MartingaleTest::standard(1.0, 0.01);

    let mut samples = Vec::new();
    for f in TestFunction::presets() {
        let b = MfBuilder::new(f, &chars, grid.clone())?;
        samples.push((format!("M^{}", f.label()), drivers.iter().map(|y| b.build(y)).collect::<Result<_, _>>()?));
    }
    println!("{}", test.run("mixed", &samples)?);

    let spec = SdeSpec::parse(0.3, "0.2", "ind(x > 0)").expect("valid coefficients");
    for (name, solver_spec) in [("exact drift", spec.clone()), ("drift + 0.2", spec.with_drift_offset(0.2))] {
        let xs: Vec<CadlagPath> = drivers.iter().map(|l| solve_sde(&solver_spec, l)).collect::<Result<_, _>>()?;
        let mut samples = Vec::new();
        for g in TestFunction::presets() {
            let b = KgBuilder::new(g, &spec, &chars, grid.clone())?;
            samples.push((format!("K^{}", g.label()), xs.iter().map(|x| b.build(x)).collect::<Result<_, _>>()?));
        }
        println!("{name}: {}", test.run("mixed", &samples)?);
    }
    Ok(())
}
