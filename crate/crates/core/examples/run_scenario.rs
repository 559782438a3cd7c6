//! Parses and runs a bundled scenario, or a scenario file given as the
//! first argument, and prints the report.

use trustfed::registry::FederationRegistry;
use trustfed::scenario::{bundled, parse_scenario, run, RunOptions};

fn main() {
    let arg = std::env::args().nth(1).unwrap_or_else(|| "crossborder_auth".into());
    let text = match bundled(&arg) {
        Some(t) => t.to_string(),
        None => std::fs::read_to_string(&arg).expect("readable scenario file"),
    };
    let sc = match parse_scenario(&text) {
        Ok(sc) => sc,
        Err(e) => {
            eprintln!("{e}");
            std::process::exit(e.exit_code());
        }
    };
    let report = run(&sc, &FederationRegistry::bundled(), &RunOptions::default()).expect("runnable scenario");
    print!("{report}");
}
