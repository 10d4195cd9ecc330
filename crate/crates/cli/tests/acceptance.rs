//! Acceptance catalog as a test target: one PASS/FAIL line per criterion,
//! non-zero exit if any fails.

use std::process::ExitCode;

use soficlab_cli::suite::run_one;

fn main() -> ExitCode {
    let mut failed = 0;
    for id in 1..=11 {
        let c = run_one(id);
        println!(
            "criterion {:>2} {:<34} {} ({:.2}s) {}",
            c.id,
            c.name,
            if c.pass { "PASS" } else { "FAIL" },
            c.seconds,
            c.detail
        );
        failed += usize::from(!c.pass);
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
