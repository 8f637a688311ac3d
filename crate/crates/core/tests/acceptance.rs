//! Acceptance suite: one line per criterion, non-zero exit on any failure.

use std::path::PathBuf;
use std::process::ExitCode;

use geiringer::verify::{run_criterion, VerifyOptions, CRITERIA};

fn main() -> ExitCode {
    // `cargo test -- <filter>` passes libtest flags; only honour a numeric filter.
    let only: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let opts = VerifyOptions {
        exe: Some(PathBuf::from(env!("CARGO_BIN_EXE_geiringer"))),
        ..Default::default()
    };
    let mut failed = 0;
    for (id, _, _) in CRITERIA {
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let r = run_criterion(id, &opts);
        println!("{}", r.line());
        if !r.passed {
            failed += 1;
        }
    }
    if failed == 0 {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
