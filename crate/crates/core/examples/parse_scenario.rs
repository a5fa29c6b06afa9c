//! Parses a scenario file, shows located errors for a broken one and prints
//! the canonical form.
//!
//! ```bash
//! cargo run --example parse_scenario
//! ```

use siilab::config::{parse_config, preset_text};
use siilab::expr::parse_expression;

fn main() {
    let text = preset_text("degenerate-sigma").expect("shipped preset");
    let config = parse_config(text).expect("valid preset");
    println!("sigma = {} parses to {:?}", config.sde.sigma, parse_expression(&config.sde.sigma).unwrap());
    println!("--- canonical form ---\n{}", config.to_canonical());

    let broken = text.replace("c = 1.0", "c = -1.0").replace("\"ind(x > 0)\"", "\"ind(x >)\"");
    match parse_config(&broken) {
        Ok(_) => unreachable!(),
        Err(errs) => println!("--- errors ---\n{errs}"),
    }
}
