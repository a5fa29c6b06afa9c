//! The dual construction on one path: splice an auxiliary driver `U` into
//! `L` wherever `sigma(X) != 0`, then recover `L` from `X` and `V`.
//!
//! ```bash
//! cargo run --release --example driver_recovery
//! ```

use std::sync::Arc;

use siilab::dual::{recover_driver, splice, SplicingMask};
use siilab::rng::Role;
use siilab::sde::solve_sde;
use siilab::simulate::simulate_bivariate;
use siilab::{LocalCharacteristics, RngStream, SdeSpec, TimeGrid};

fn main() -> siilab::Result<()> {
    let chars = LocalCharacteristics::mixed();
    let grid = Arc::new(TimeGrid::uniform(1.0, 50)?);
    // sigma vanishes on the negative half-line
    let spec = SdeSpec::parse(0.3, "0.2", "ind(x > 0)").expect("valid coefficients");

    let (u, l) = simulate_bivariate(
        &chars,
        grid,
        RngStream::for_role(11, Role::Auxiliary, 0),
        RngStream::for_role(11, Role::Driver, 0),
    )?;
    let x = solve_sde(&spec, &l)?;
    let mask = SplicingMask::for_splice(&x, &spec, &u, &l)?;
    let v = splice(&mask, &u, &l)?;
    let lhat = recover_driver(&x, &spec, &v)?;

    let off = mask.cells().iter().filter(|b| !**b).count();
    println!("{off} of {} cells have sigma(X) = 0 and take L's increments", mask.cells().len());
    let err = lhat.values().iter().zip(l.values()).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    println!("max |L_hat - L| = {err:.3e}");
    println!("joint jump mass of U and L: {}", u.joint_jump_mass(&l));
    Ok(())
}
