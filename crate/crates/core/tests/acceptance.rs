//! The twelve acceptance criteria, one printed verdict line each.

use std::time::{Duration, Instant};

use shuffle_vr::verify::{run_suite, Check, Suite, VerifyOptions};

fn criterion(index: usize, suite: Suite, budget: Duration) {
    let start = Instant::now();
    let checks = run_suite(suite, &VerifyOptions::default()).expect("suite runs");
    let elapsed = start.elapsed();
    let ok = checks.iter().all(Check::passed);
    let worst = checks.iter().find(|c| !c.passed()).unwrap_or(&checks[0]);
    println!(
        "criterion {index:>2} {:<16} {} ({} checks, {:.2?}; {})",
        suite.name(),
        if ok { "PASS" } else { "FAIL" },
        checks.len(),
        elapsed,
        worst.report_line().replace('\t', " ")
    );
    for c in &checks {
        println!("    {}", c.report_line());
    }
    assert!(ok, "criterion {index} ({suite}) failed: {checks:#?}");
    assert!(elapsed <= budget, "criterion {index} ({suite}) took {elapsed:?}, budget {budget:?}");
}

#[test]
fn c01_fixed_point() {
    criterion(1, Suite::FixedPoint, Duration::from_secs(10));
}

#[test]
fn c02_nonexpansive() {
    criterion(2, Suite::NonExpansive, Duration::from_secs(30));
}

#[test]
fn c03_expectation() {
    criterion(3, Suite::Expectation, Duration::from_secs(60));
}

#[test]
fn c04_convex_envelope() {
    criterion(4, Suite::ConvexEnvelope, Duration::from_secs(30));
}

#[test]
fn c05_sc_envelope() {
    criterion(5, Suite::StronglyConvexEnvelope, Duration::from_secs(30));
}

#[test]
fn c06_ordering() {
    criterion(6, Suite::Ordering, Duration::from_secs(60));
}

#[test]
fn c07_heterogeneous() {
    criterion(7, Suite::Heterogeneous, Duration::from_secs(20));
}

#[test]
fn c08_order_race() {
    criterion(8, Suite::OrderRace, Duration::from_secs(60));
}

#[test]
fn c09_sample_size() {
    criterion(9, Suite::SampleSize, Duration::from_secs(120));
}

#[test]
fn c10_implementations() {
    criterion(10, Suite::Implementations, Duration::from_secs(5));
}

#[test]
fn c11_step_sizes() {
    criterion(11, Suite::StepSizes, Duration::from_secs(1));
}

#[test]
fn c12_vr_comparison() {
    criterion(12, Suite::VrComparison, Duration::from_secs(120));
}
