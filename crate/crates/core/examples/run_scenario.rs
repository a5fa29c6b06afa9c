//! Runs the dual check of the degenerate preset with fewer paths and lists
//! the artifacts it writes.
//!
//! ```bash
//! cargo run --release --example run_scenario
//! ```

use siilab::config::ScenarioConfig;
use siilab::scenario::{run_scenario, Command};

fn main() -> siilab::Result<()> {
    let mut config = ScenarioConfig::preset("degenerate-sigma").expect("shipped preset");
    config.mc.n_paths = 2000;
    let out = std::env::temp_dir().join("siilab-example");
    let outcome = run_scenario(&config, Command::DualCheck, &out)?;
    for r in &outcome.reports {
        println!("{r}");
        for s in &r.statistics {
            println!("  {:<55} {:>12.4e} <= {:.4e}", s.label, s.value, s.threshold);
        }
    }
    for f in &outcome.files {
        println!("wrote {}", f.display());
    }
    std::process::exit(outcome.exit_code());
}
