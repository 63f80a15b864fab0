//! Runs every acceptance criterion and prints one line per criterion.
//! Pass criterion ids as arguments to run a subset.

use fano_core::acceptance::{run_criterion, ToleranceProfile, CRITERIA};
use std::process::ExitCode;

fn main() -> ExitCode {
    let selected: Vec<u8> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let ids: Vec<u8> = if selected.is_empty() { CRITERIA.to_vec() } else { selected };
    let mut failed = 0;
    for id in &ids {
        let r = run_criterion(*id, ToleranceProfile::Default);
        println!("{r}");
        if !r.passed {
            failed += 1;
        }
    }
    println!("acceptance: {} passed, {failed} failed", ids.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
