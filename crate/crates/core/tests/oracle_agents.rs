use std::path::Path;

use sgr::oracle::{containment_check, sample_sublevel, OracleViolation};
use sgr::scenario::{certify_scenario, parse_scenario, Certified};

fn two_agent() -> Certified {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios/two_agent.json");
    let cfg = parse_scenario(&path).unwrap();
    certify_scenario(&cfg.build().unwrap(), &cfg, false).unwrap()
}

// Model coordinates are (y_1, varrho_1); the second agent mirrors the first.
#[test]
fn agent_verdicts() {
    let cert = two_agent();
    let oracle = cert.classifier.as_ref();
    assert_eq!(oracle.dim(), 2);
    assert!(oracle.classify(&[0.0, 0.0]).is_in_region());
    assert!(oracle.classify(&[0.3, -0.2]).is_in_region());

    let far = oracle.classify(&[-3.5, 0.0]);
    assert_eq!(far.violation_kind, Some(OracleViolation::Disconnect));
    assert_eq!(far.first_violation_time, Some(0.0));

    let close = oracle.classify(&[1.5, 0.0]);
    assert_eq!(close.violation_kind, Some(OracleViolation::Collision));

    // closing fast from a safe distance
    let rush = oracle.classify(&[0.5, 4.0]);
    assert!(!rush.is_in_region());
    assert!(rush.first_violation_time.unwrap() > 0.0);
}

#[test]
fn fixed_barrier_region_is_contained() {
    let cert = two_agent();
    let rep = containment_check(&cert.region, cert.classifier.as_ref(), 2_000, 11).unwrap();
    assert!(rep.passed(), "{:?}", rep.failures.first());
    let (a, ..) = sample_sublevel(&cert.region.w, cert.region.c, 100, 11).unwrap();
    let (b, ..) = sample_sublevel(&cert.region.w, cert.region.c, 100, 11).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().all(|q| cert.region.w.evaluate(q) <= cert.region.c));
}
