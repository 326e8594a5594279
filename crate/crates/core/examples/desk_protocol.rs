//! Runs (or resumes) the desk-scale comparison and writes the cache read
//! by the acceptance suite.

use std::path::PathBuf;

use arl_core::harness::{desk_plan, run_protocol};

fn main() -> arl_core::Result<()> {
    let cache = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/desk_protocol.json"));
    let plan = desk_plan()?;
    let report = run_protocol(&plan, &cache, |r| {
        println!(
            "{} seed {}: {:.0}s rates {:?} spread {:.3e}",
            r.variant, r.seed, r.wall_secs, r.rates, r.value_spread
        );
    })?;
    println!("adjacent {:?} far {:?} max span {}", report.adjacent, report.far, report.max_span);
    Ok(())
}
