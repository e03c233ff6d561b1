//! Acceptance suite: one line per criterion, nonzero exit if any fails.
//!
//! Run a single criterion with `cargo test --test acceptance -- 7`.

use std::process::ExitCode;

use tikflow::suite::CRITERIA;

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let selected: Vec<_> = CRITERIA
        .iter()
        .filter(|(id, _)| filters.is_empty() || filters.iter().any(|f| f == id))
        .collect();
    println!("running {} acceptance criteria", selected.len());
    let mut failed = Vec::new();
    for (id, run) in selected {
        let c = run();
        println!("{c}");
        if !c.passed {
            failed.push(*id);
        }
    }
    if failed.is_empty() {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: failed criteria: {}", failed.join(", "));
        ExitCode::FAILURE
    }
}
