//! One PASS/FAIL line per acceptance criterion. With `QCOLL_ACCEPTANCE_STRICT=1` the
//! process exits nonzero when a hard criterion is red; otherwise it reports and lets the
//! remaining test targets run.

use std::process::ExitCode;

use qcoll::harness::checks::{criteria, run_checks, VerifyContext};

fn main() -> ExitCode {
    let seed = std::env::var("QCOLL_SEED").ok().and_then(|s| s.parse().ok()).unwrap_or(1);
    let strict = std::env::var("QCOLL_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let outcomes = run_checks(&VerifyContext { seed, mutate: false }, None);
    let mut red = Vec::new();
    for c in criteria(&outcomes) {
        let verdict = if c.passed { "PASS" } else { "FAIL" };
        let soft = if c.soft { " (soft)" } else { "" };
        println!("criterion {}: {verdict}{soft} -- {}", c.criterion, c.detail);
        if !c.passed && !c.soft {
            red.push(c.criterion.to_string());
        }
    }
    println!("acceptance: {} hard criteria red [{}]", red.len(), red.join(","));
    if strict && !red.is_empty() {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
