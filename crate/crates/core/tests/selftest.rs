use tdip::selftest::{run_selftest, Operator, SelftestOptions};

#[test]
fn full_selftest_passes() {
    let report = run_selftest(&SelftestOptions::default()).unwrap();
    for c in &report.checks {
        println!("{}", c.line());
    }
    assert!(report.passed());
}

#[test]
fn injected_fault_names_the_operator() {
    let report = run_selftest(&SelftestOptions {
        flip_adjoint: Some(Operator::Nufft),
        seed: 0,
    })
    .unwrap();
    let failed: Vec<_> = report.failures().collect();
    assert_eq!(failed.len(), 1);
    assert!(failed[0].line().contains("nufft"));
}
