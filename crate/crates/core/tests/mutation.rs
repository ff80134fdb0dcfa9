use home_core::acceptance::{run_one, AcceptanceReport};
use home_core::HomeConfig;

#[test]
fn tampered_first_moment_decay_fails_adam_reduction() {
    let tampered = HomeConfig {
        beta1: 0.8,
        ..HomeConfig::default()
    };
    let report = run_one(1, &tampered).unwrap();
    assert!(!report.passed, "{}", report.detail);
}

#[test]
fn tampered_second_moment_decay_fails_adam_reduction() {
    let tampered = HomeConfig {
        beta2: 0.99,
        beta3: 0.95,
        ..HomeConfig::default()
    };
    assert!(!run_one(1, &tampered).unwrap().passed);
}

#[test]
fn default_checks_pass_and_report_serializes() {
    let report = AcceptanceReport {
        criteria: [1, 2, 4, 11]
            .iter()
            .map(|&id| run_one(id, &HomeConfig::default()).unwrap())
            .collect(),
    };
    assert!(report.passed(), "{:#?}", report.lines());
    let json = serde_json::to_string(&report).unwrap();
    let back: AcceptanceReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back.criteria.len(), 4);
}
