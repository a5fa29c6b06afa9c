//! Sticky Brownian motion from a time-changed reflected Brownian motion,
//! checked against the occupation identity, next to the naive Euler scheme
//! that never sticks.
//!
//! ```bash
//! cargo run --release --example sticky
//! ```

use std::sync::Arc;

use siilab::sticky::{calibrate_kappa, verify_sticky_system, StickyCheck, StickyParams};
use siilab::TimeGrid;

fn main() -> siilab::Result<()> {
    let params = StickyParams::new(1.0, 0.0)?;
    let grid = Arc::new(TimeGrid::uniform(1.0, 1000)?);
    let check = StickyCheck { seed: 3, ..StickyCheck::default() };

    let r = verify_sticky_system(params, 4000, grid.clone(), &check)?;
    println!("{r}");
    for n in &r.notes {
        println!("  {n}");
    }
    let naive = verify_sticky_system(params, 4000, grid.clone(), &StickyCheck { naive: true, ..check })?;
    println!("naive Euler: {naive}");

    let kappa = calibrate_kappa(params, grid, 2000, 9, check.epsilon)?;
    println!("calibrated time-change rate {kappa:.3} (analytic 1/mu = {:.3})", params.kappa());
    Ok(())
}
