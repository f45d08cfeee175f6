//! End-to-end acceptance suite. `acceptance_criteria` runs the ten
//! criteria in order and prints one PASS/FAIL line for each; the `cli`
//! module holds smoke tests of the binary.

mod cli;
mod criteria;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

/// Outcome of one criterion: whether it holds and the measured values.
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }
}

/// Written straight to stderr so the lines appear even when the harness
/// captures test output.
pub fn say(line: &str) {
    let mut e = std::io::stderr().lock();
    let _ = writeln!(e, "{line}");
    let _ = e.flush();
}

fn run(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let out = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Outcome::new(false, format!("panicked: {msg}"))
    });
    say(&format!(
        "criterion {n:>2} {name}: {} ({}; {:.1} s)",
        if out.pass { "PASS" } else { "FAIL" },
        out.detail,
        start.elapsed().as_secs_f64()
    ));
    out.pass
}

#[test]
fn acceptance_criteria() {
    let mut shared = criteria::Shared::default();
    let results = [
        run(1, "gradient check", criteria::gradient_check),
        run(2, "fastica recovery", criteria::fastica_recovery),
        run(3, "ols correctness", criteria::ols_correctness),
        run(4, "end-to-end lstm-aer", || criteria::end_to_end(&mut shared)),
        run(5, "subject variation", || criteria::subject_variation_vote(&mut shared)),
        run(6, "epoch stability", || criteria::epoch_stability(&mut shared)),
        run(7, "latent size sweep", || criteria::latent_sweep(&mut shared)),
        run(8, "statistics suite", criteria::statistics),
        run(9, "cli determinism", criteria::cli_determinism),
        run(10, "io formats", criteria::io_formats),
    ];
    let failed: Vec<usize> = (1..=10).filter(|&k| !results[k - 1]).collect();
    say(&format!("acceptance: {} of 10 criteria pass", 10 - failed.len()));
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
