//! One line per criterion with the shipped config; fails if any criterion fails.

use levitation_cli::acceptance::evaluate;
use levitation_cli::config::MasterConfig;

#[test]
fn acceptance_criteria() {
    let cfg = MasterConfig::shipped();
    let (report, _) = evaluate(&cfg, &[]).expect("acceptance runs");
    for c in &report.criteria {
        println!("{}", c.line());
    }
    assert_eq!(report.criteria.len(), 12);
    let failed: Vec<u8> = report.criteria.iter().filter(|c| !c.passed).map(|c| c.id).collect();
    assert!(failed.is_empty(), "failing criteria: {failed:?}");
}
