use std::sync::{Arc, OnceLock};

use logjam_core::attacker::*;
use logjam_core::dlog::{precompute_logdb, EngineOptions, LogDb};
use logjam_core::harness::{parse_scenario, run_scenario_with, ScenarioConfig, ScenarioReport};
use logjam_core::tls::{seal, CipherSuiteId, ClientHello, ServerHello, SessionKeys};
use proptest::prelude::*;

fn baseline() -> ScenarioConfig {
    parse_scenario("seed = 8\nplaintext = secret request\n[attacker]\ndescent_cost_ms = 150\n")
        .unwrap()
}

fn export_db() -> Arc<LogDb> {
    static DB: OnceLock<Arc<LogDb>> = OnceLock::new();
    DB.get_or_init(|| {
        let group = baseline().shared_export_group().unwrap();
        Arc::new(precompute_logdb(&group, None, 21, &EngineOptions::default()).unwrap())
    })
    .clone()
}

fn run(cfg: &ScenarioConfig) -> ScenarioReport {
    run_scenario_with(cfg, &[export_db()]).unwrap()
}

fn hello(suites: Vec<CipherSuiteId>) -> ClientHello {
    ClientHello {
        version: 0x0303,
        random: [7u8; 32],
        session_id: vec![1, 2, 3],
        suites,
        compression_methods: vec![0],
        extensions: Some(vec![9, 9]),
    }
}

#[test]
fn downgrade_touches_only_the_suites() {
    for suites in [
        vec![CipherSuiteId::DheStrong, CipherSuiteId::DheExport],
        vec![CipherSuiteId::DheStrong],
    ] {
        let before = hello(suites);
        let after = downgrade_client_hello(before.clone());
        assert_eq!(after.suites, vec![CipherSuiteId::DheExport]);
        assert_eq!(
            ClientHello {
                suites: before.suites.clone(),
                ..after
            },
            before
        );
    }
}

#[test]
fn upgrade_touches_only_the_suite() {
    let before = ServerHello {
        version: 0x0303,
        random: [3u8; 32],
        session_id: vec![],
        suite: CipherSuiteId::DheExport,
        compression_method: 0,
        extensions: None,
    };
    let after = upgrade_server_hello(before.clone(), CipherSuiteId::DheStrong);
    assert_eq!(after.suite, CipherSuiteId::DheStrong);
    assert_eq!(after.random, before.random);
    assert_eq!(
        ServerHello {
            suite: CipherSuiteId::DheExport,
            ..after
        },
        before
    );
}

#[test]
fn success_matches_both_endpoints() {
    let r = run(&baseline());
    assert_eq!(r.verdict(), Some(Verdict::Success));
    let mitm = r.attacker.as_ref().unwrap();
    let master = &mitm.keys.as_ref().unwrap().master_secret;
    assert_eq!(r.client.master_secret(), Some(master));
    assert_eq!(r.server.master_secret(), Some(master));
    assert_eq!(r.client.suite, Some(CipherSuiteId::DheStrong));
    assert_eq!(r.server.suite, Some(CipherSuiteId::DheExport));
    assert!(mitm.handshake_forged());
    assert!(mitm.log.iter().all(|l| l.tag == "mitm"));
    let phases: Vec<&str> = mitm.log.iter().map(|l| l.phase).collect();
    for p in [
        "downgrade",
        "upgrade",
        "descent-start",
        "descent-done",
        "keys",
        "forge",
    ] {
        assert!(phases.contains(&p), "{p} missing from {phases:?}");
    }
}

#[test]
fn server_key_exchange_passes_through_unchanged() {
    let r = run(&baseline());
    let ske: Vec<&str> = r
        .transcript
        .iter()
        .filter(|t| t.kind == "ServerKeyExchange")
        .map(|t| t.hex.as_str())
        .collect();
    assert_eq!(ske.len(), 2);
    assert_eq!(ske[0], ske[1]);
}

#[test]
fn key_recovery_checks_the_exponent() {
    let r = run(&baseline());
    let mitm = r.attacker.unwrap();
    let b = mitm.recovered_b.clone().unwrap();
    assert_eq!(
        recover_session_keys(&mitm, &b).unwrap().master_secret,
        *r.server.master_secret().unwrap()
    );
    assert_eq!(
        recover_session_keys(&mitm, &(&b + 1u32)),
        Err(AttackError::Inconsistent)
    );
    let fresh = AttackerState::new(AttackerConfig::new(vec![], 5000));
    assert_eq!(
        recover_session_keys(&fresh, &b),
        Err(AttackError::MissingValues)
    );
}

#[test]
fn records_decrypt_only_under_the_right_keys() {
    let r = run(&baseline());
    let mut mitm = r.attacker.unwrap();
    let record = mitm.captured_records[0].clone();
    assert_eq!(
        decrypt_application_data(&mitm, &record).unwrap(),
        b"secret request"
    );
    let forged = reencrypt_application_data(&mitm, &record, b"other").unwrap();
    assert_eq!(decrypt_application_data(&mitm, &forged).unwrap(), b"other");

    let wrong = SessionKeys::from_master_secret([1u8; 48], &[0u8; 32], &[0u8; 32]);
    let unrelated = seal(&wrong.client_write, 1, b"x");
    assert!(matches!(
        decrypt_application_data(&mitm, &unrelated),
        Err(AttackError::Record(_))
    ));
    mitm.keys = Some(wrong);
    assert!(matches!(
        decrypt_application_data(&mitm, &record),
        Err(AttackError::Record(_))
    ));
    mitm.keys = None;
    assert_eq!(
        decrypt_application_data(&mitm, &record),
        Err(AttackError::NoKeys)
    );
}

#[test]
fn stall_interval_defaults_to_half_the_timeout() {
    assert_eq!(AttackerConfig::new(vec![], 5000).stall_interval_ms, 2500);
    let mut c = baseline();
    c.attacker.as_mut().unwrap().descent_cost_ms = Some(12_000);
    let r = run(&c);
    let alerts: Vec<u64> = r
        .transcript
        .iter()
        .filter(|t| t.kind == "WarningAlert")
        .map(|t| t.time)
        .collect();
    assert!(alerts.len() >= 4);
    for w in alerts.windows(2) {
        assert_eq!(w[1] - w[0], 2500);
    }
}

#[test]
fn outcome_serializes_with_screaming_verdicts() {
    let r = run(&baseline());
    let json = serde_json::to_string(r.outcome.as_ref().unwrap()).unwrap();
    assert!(json.contains("\"verdict\":\"SUCCESS\""));
    assert!(json.contains(&hex::encode(b"secret request")));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Pre-warming by at least the descent cost beats a fixed timer.
    #[test]
    fn early_start_beats_a_fixed_timer(cost in 0u64..60_000, extra in 0u64..5_000) {
        let mut c = baseline();
        c.client.alert_resets_timer = false;
        let a = c.attacker.as_mut().unwrap();
        a.descent_cost_ms = Some(cost);
        a.early_start_offset_ms = cost + extra;
        let r = run(&c);
        prop_assert_eq!(r.verdict(), Some(Verdict::Success));
        let client_finished = r.transcript.iter().find(|t| t.direction == "mitm->client" && t.kind == "Finished").unwrap();
        prop_assert!(client_finished.time + c.link_delay_ms < c.client.handshake_timeout_ms);
    }

    #[test]
    fn fixed_timer_times_out_exactly_when_cost_passes_the_deadline(cost in 0u64..12_000) {
        let mut c = baseline();
        c.client.alert_resets_timer = false;
        c.attacker.as_mut().unwrap().descent_cost_ms = Some(cost);
        let r = run(&c);
        // Descent starts when the key exchange reaches the attacker (3 hops);
        // Yc arrives at 5 hops; the forged Finished needs one more hop.
        let d = c.link_delay_ms;
        let arrives = (3 * d + cost).max(5 * d) + d;
        let expected = if arrives < c.client.handshake_timeout_ms { Verdict::Success } else { Verdict::Timeout };
        prop_assert_eq!(r.verdict(), Some(expected), "cost {}", cost);
    }
}
