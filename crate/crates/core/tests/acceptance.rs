//! Runs every acceptance criterion with pinned seeds, one line per criterion.
//!
//! Pass criterion ids as arguments to run a subset, e.g.
//! `cargo test -p liesde --test acceptance -- 1 3`.

use std::process::ExitCode;

use liesde::suite::{run_suite, CRITERIA};

fn main() -> ExitCode {
    let ids: Vec<u8> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let ids = if ids.is_empty() {
        (1..=CRITERIA.len() as u8).collect()
    } else {
        ids
    };
    println!("running {} acceptance criteria", ids.len());
    match run_suite(&ids, |c| println!("{}", c.line())) {
        Ok(report) => {
            let passed = report.criteria.iter().filter(|c| c.passed).count();
            println!(
                "acceptance: {passed}/{} criteria passed",
                report.criteria.len()
            );
            if report.passed {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            println!("acceptance aborted: {e}");
            ExitCode::FAILURE
        }
    }
}
