//! Acceptance criteria 1 to 11. Runs without the libtest harness and prints
//! one PASS or FAIL line per criterion.

mod common;

use std::sync::Arc;
use std::time::{Duration, Instant};

use logjam_core::attacker::{DescentStatus, Verdict};
use logjam_core::dlog::*;
use logjam_core::group_math::{generate_safe_prime, measure_magnitude_bits, mod_exp};
use logjam_core::harness::*;
use logjam_core::tls::{
    decode_message, encode_message, CipherSuiteId, Failure, HandshakeMessage, Phase,
};
use num_bigint::BigUint;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    v[v.len() / 2]
}

fn baseline() -> ScenarioConfig {
    parse_scenario(
        "seed = 1\nplaintext = GET /inbox HTTP/1.1\n[attacker]\ndescent_cost_ms = 1000\n",
    )
    .unwrap()
}

fn export_db() -> Arc<LogDb> {
    let group = baseline().shared_export_group().unwrap();
    Arc::new(precompute_logdb(&group, None, 1, &EngineOptions::default()).unwrap())
}

fn c1_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (mut cases, mut agree) = (0, 0);
    for i in 0..40u64 {
        let bits = 21 + i % 12;
        let group = generate_safe_prime(bits, rng.gen()).map_err(|e| e.to_string())?;
        let db = precompute_logdb(&group, None, rng.gen(), &EngineOptions::default())
            .map_err(|e| e.to_string())?;
        for _ in 0..5 {
            let x = BigUint::from(rng.gen::<u64>()) % group.q();
            let y = mod_exp(group.g(), &x, group.p()).unwrap();
            let ic = ic_descent(&db, &y, rng.gen(), DEFAULT_DESCENT_BUDGET)
                .map_err(|e| e.to_string())?;
            let bs = bsgs_log(&group, &y, group.q()).map_err(|e| e.to_string())?;
            cases += 1;
            if ic == bs {
                agree += 1;
            }
        }
    }
    check(
        cases >= 200 && agree == cases,
        format!("{agree}/{cases} agree"),
    )?;
    Ok(format!(
        "{agree}/{cases} instances, p in [2^20, 2^32], index calculus = BSGS"
    ))
}

fn c2_amortization() -> Outcome {
    let group = generate_safe_prime(40, 2).map_err(|e| e.to_string())?;
    let (db, pre) = timed(|| precompute_logdb(&group, None, 2, &EngineOptions::default()));
    let db = db.map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut times = Vec::new();
    for i in 0..20u64 {
        let x = BigUint::from(rng.gen::<u64>()) % group.q();
        let y = mod_exp(group.g(), &x, group.p()).unwrap();
        let (r, t) = timed(|| ic_descent(&db, &y, i, DEFAULT_DESCENT_BUDGET));
        let got = r.map_err(|e| e.to_string())?;
        check(
            mod_exp(group.g(), &got, group.p()).unwrap() == y,
            "descent answer wrong",
        )?;
        check(t <= Duration::from_secs(30), format!("descent took {t:?}"))?;
        times.push(t);
    }
    let med = median(times);
    let ratio = med.as_secs_f64() / pre.as_secs_f64();
    check(
        ratio <= 0.10,
        format!(
            "median descent {med:?} is {:.1}% of precompute {pre:?}",
            ratio * 100.0
        ),
    )?;
    Ok(format!(
        "precompute {pre:?}, median descent {med:?} ({:.2}%)",
        ratio * 100.0
    ))
}

fn c3_honest_soundness() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let all = [CipherSuiteId::DheStrong, CipherSuiteId::DheExport];
    for i in 0..100 {
        let mut cfg = ScenarioConfig {
            seed: rng.gen(),
            link_delay_ms: rng.gen_range(0..80),
            ..Default::default()
        };
        let pick = |rng: &mut ChaCha8Rng| -> Vec<CipherSuiteId> {
            match rng.gen_range(0..3) {
                0 => vec![all[0]],
                1 => vec![all[1]],
                _ => all.to_vec(),
            }
        };
        cfg.server.suites = pick(&mut rng);
        cfg.client.suites = loop {
            let s = pick(&mut rng);
            if s.iter().any(|x| cfg.server.suites.contains(x)) {
                break s;
            }
        };
        cfg.server.signed_suite_mode = rng.gen();
        cfg.server.fresh_group_per_install = rng.gen_bool(0.2);
        cfg.server.install_seed = rng.gen();
        cfg.server.pad_p_to = if rng.gen() {
            Some(rng.gen_range(0..20))
        } else {
            None
        };
        cfg.client.min_prime_bits = rng.gen_range(0..=48);
        cfg.client.handshake_timeout_ms = rng.gen_range(1000..10_000);
        cfg.client.alert_resets_timer = rng.gen();
        cfg.client.false_start = rng.gen();
        cfg.plaintext = (0..rng.gen_range(0..64)).map(|_| rng.gen()).collect();
        let r = run_scenario_with(&cfg, &[]).map_err(|e| e.to_string())?;
        let ok = r.client.phase == Phase::Established
            && r.server.phase == Phase::Established
            && r.client.master_secret().is_some()
            && r.client.master_secret() == r.server.master_secret()
            && r.server.received_plaintexts == vec![cfg.plaintext.clone()];
        check(ok, format!("case {i}: {}", r.summary()))?;
    }
    Ok("100/100 fuzzed configurations established with equal master secrets".into())
}

fn c4_end_to_end() -> Outcome {
    let started = Instant::now();
    let cfg = baseline();
    let r = run_scenario_with(&cfg, &[export_db()]).map_err(|e| e.to_string())?;
    let elapsed = started.elapsed();
    let mitm = r.attacker.as_ref().unwrap();
    check(r.verdict() == Some(Verdict::Success), r.summary())?;
    check(
        cfg.shared_export_group().unwrap().magnitude_bits() == 48,
        "export group is not 48 bits",
    )?;
    check(
        mitm.recovered_plaintexts == vec![cfg.plaintext.clone()],
        "recovered plaintext differs",
    )?;
    check(
        r.client.suite == Some(CipherSuiteId::DheStrong),
        "client suite",
    )?;
    check(
        r.server.suite == Some(CipherSuiteId::DheExport),
        "server suite",
    )?;
    check(
        elapsed <= Duration::from_secs(60),
        format!("took {elapsed:?}"),
    )?;
    Ok(format!(
        "SUCCESS in {elapsed:?} including precompute; client DHE_STRONG, server DHE_EXPORT"
    ))
}

#[derive(Clone, Copy, Debug)]
struct Toggles {
    export: bool,
    fixed_timer: bool,
    min_bits: bool,
    fresh_group: bool,
    signed: bool,
}

fn matrix_config(t: Toggles, cost: u64, early: u64) -> ScenarioConfig {
    let mut c = baseline();
    if !t.export {
        c.server.suites = vec![CipherSuiteId::DheStrong];
    }
    c.client.alert_resets_timer = !t.fixed_timer;
    c.client.min_prime_bits = if t.min_bits { 64 } else { 0 };
    c.server.fresh_group_per_install = t.fresh_group;
    c.server.install_seed = 5;
    c.server.signed_suite_mode = t.signed;
    let a = c.attacker.as_mut().unwrap();
    a.descent_cost_ms = Some(cost);
    a.early_start_offset_ms = early;
    c
}

/// The invariant, with the failing verdict each countermeasure produces.
fn expected_verdict(t: Toggles, cost: u64, early: u64, deadline: u64) -> Verdict {
    if !t.export {
        Verdict::DowngradeRejected
    } else if t.signed {
        Verdict::ClientRejectedSignature
    } else if t.min_bits {
        Verdict::ClientRejectedGroup
    } else if t.fresh_group {
        Verdict::NoLogdb
    } else if t.fixed_timer && cost > deadline && early < cost {
        Verdict::Timeout
    } else {
        Verdict::Success
    }
}

fn c5_matrix() -> Outcome {
    let db = export_db();
    let deadline = baseline().client.handshake_timeout_ms;
    let mut checked = 0;
    for (cost, early) in [
        (10 * deadline, 0),
        (deadline / 5, 0),
        (10 * deadline, 10 * deadline),
    ] {
        for bits in 0u32..32 {
            let t = Toggles {
                export: bits & 1 != 0,
                fixed_timer: bits & 2 != 0,
                min_bits: bits & 4 != 0,
                fresh_group: bits & 8 != 0,
                signed: bits & 16 != 0,
            };
            let r = run_scenario_with(&matrix_config(t, cost, early), std::slice::from_ref(&db))
                .map_err(|e| e.to_string())?;
            let want = expected_verdict(t, cost, early, deadline);
            check(
                r.verdict() == Some(want),
                format!(
                    "{t:?} cost {cost} early {early}: got {}, want {want}",
                    r.summary()
                ),
            )?;
            checked += 1;
        }
    }
    Ok(format!(
        "{checked} runs (32 toggle combinations x 3 cost settings) match the verdict mapping"
    ))
}

fn c6_padding() -> Outcome {
    let mut c = baseline();
    c.server.pad_p_to = Some(16);
    c.client.min_prime_bits = 64;
    let r = run_scenario_with(&c, &[export_db()]).map_err(|e| e.to_string())?;
    check(
        r.verdict() == Some(Verdict::ClientRejectedGroup),
        r.summary(),
    )?;
    let ske = r
        .transcript
        .iter()
        .find(|t| t.kind == "ServerKeyExchange")
        .ok_or("no ServerKeyExchange")?
        .decode()
        .map_err(|e| e.to_string())?;
    let HandshakeMessage::ServerKeyExchange(ske) = ske else {
        return Err("wrong message".into());
    };
    let (encoded, magnitude) =
        measure_magnitude_bits(&ske.params.p, &ske.params.p_value()).map_err(|e| e.to_string())?;
    check(
        encoded == 128 && magnitude == 48,
        format!("encoded {encoded}, magnitude {magnitude}"),
    )?;
    check(
        encoded >= 64 && magnitude < 64,
        "an encoded-length check would not have passed",
    )?;
    Ok("16-byte encoding of a 48-bit prime rejected by magnitude; encoded length (128 bits) would pass".into())
}

fn c7_stall() -> Outcome {
    let mut c = baseline();
    let deadline = c.client.handshake_timeout_ms;
    c.attacker.as_mut().unwrap().descent_cost_ms = Some(10 * deadline);
    let r = run_scenario_with(&c, &[export_db()]).map_err(|e| e.to_string())?;
    let alerts = r
        .transcript
        .iter()
        .filter(|t| t.kind == "WarningAlert")
        .count();
    check(
        r.verdict() == Some(Verdict::Success),
        format!("vulnerable: {}", r.summary()),
    )?;
    check(alerts > 0, "no stall alerts")?;
    c.client.alert_resets_timer = false;
    let r = run_scenario_with(&c, &[export_db()]).map_err(|e| e.to_string())?;
    check(
        r.verdict() == Some(Verdict::Timeout),
        format!("fixed: {}", r.summary()),
    )?;
    // The deadline is armed when the ClientHello goes out at t = 0.
    check(
        r.client.failure() == Some(&Failure::Timeout { at: deadline }),
        format!("fixed: {:?}", r.client.phase),
    )?;
    Ok(format!(
        "vulnerable timer SUCCESS after {alerts} alerts; fixed timer TIMEOUT at t={deadline}"
    ))
}

fn c8_false_start() -> Outcome {
    let mut c = baseline();
    let deadline = c.client.handshake_timeout_ms;
    c.client.false_start = true;
    c.client.alert_resets_timer = false;
    c.attacker.as_mut().unwrap().descent_cost_ms = Some(10 * deadline);
    let r = run_scenario_with(&c, &[export_db()]).map_err(|e| e.to_string())?;
    let mitm = r.attacker.as_ref().unwrap();
    check(r.verdict() == Some(Verdict::Timeout), r.summary())?;
    let Some(Failure::Timeout { at: aborted }) = r.client.failure().cloned() else {
        return Err(format!("client did not time out: {:?}", r.client.phase));
    };
    let DescentStatus::Solved { at: solved } = mitm.descent else {
        return Err(format!("{:?}", mitm.descent));
    };
    check(
        solved > aborted,
        format!("descent finished at {solved}, abort at {aborted}"),
    )?;
    check(
        mitm.recovered_plaintexts == r.client.sent_plaintexts,
        "recovered plaintext differs",
    )?;
    check(
        mitm.recovered_plaintexts == vec![c.plaintext.clone()],
        "nothing recovered",
    )?;
    Ok(format!("client aborted at t={aborted}, descent done at t={solved}, early data decrypted byte-equal"))
}

fn c9_pohlig_hellman() -> Outcome {
    let group = generate_smooth_order_group(40, 12, 9).map_err(|e| e.to_string())?;
    let report = audit_group(
        &group.p().to_bytes_be(),
        group.g(),
        &AuditOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let flagged = report
        .findings
        .iter()
        .any(|f| matches!(f, Finding::PohligHellmanRisk { .. }));
    check(
        flagged && report.grade == RiskGrade::High,
        format!("audit findings {:?}", report.findings),
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut ph_times, mut bs_times) = (Vec::new(), Vec::new());
    for _ in 0..5 {
        let x = BigUint::from(rng.gen::<u64>()) % group.q();
        let y = mod_exp(group.g(), &x, group.p()).unwrap();
        let (ph, tp) = timed(|| pohlig_hellman_log(&group, &y, group.order_factors().unwrap()));
        let (bs, tb) = timed(|| bsgs_log(&group, &y, group.q()));
        check(
            ph.ok() == Some(x.clone()) && bs.ok() == Some(x),
            "wrong answer",
        )?;
        ph_times.push(tp);
        bs_times.push(tb);
    }
    let (tp, tb) = (median(ph_times), median(bs_times));
    let speedup = tb.as_secs_f64() / tp.as_secs_f64().max(1e-9);
    check(
        speedup >= 100.0,
        format!("speedup only {speedup:.0}x ({tp:?} vs {tb:?})"),
    )?;
    Ok(format!(
        "flagged HIGH; Pohlig-Hellman {tp:?} vs BSGS {tb:?} ({speedup:.0}x)"
    ))
}

fn c10_population() -> Outcome {
    let spec =
        parse_population_spec("servers = 1000\nlogdb = G1\n[groups]\nG1 = 0.37\nG2 = 0.63\n")
            .map_err(|e| e.to_string())?;
    let shared = simulate_population(&spec).map_err(|e| e.to_string())?;
    check(
        shared.attackable_fraction == 0.370,
        format!("shared fraction {}", shared.attackable_fraction),
    )?;
    let n = 1000u64;
    let spec = parse_population_spec(&format!("servers = {n}\nassignment = unique\nlogdb = S1\n"))
        .map_err(|e| e.to_string())?;
    let unique = simulate_population(&spec).map_err(|e| e.to_string())?;
    check(
        unique.attackable_fraction == 1.0 / n as f64,
        format!("unique fraction {}", unique.attackable_fraction),
    )?;
    Ok(format!(
        "shared group {:.3}; unique groups {} = 1/{n}",
        shared.attackable_fraction, unique.attackable_fraction
    ))
}

fn c11_codec_fuzz() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut parsed, mut rejected) = (0, 0);
    for i in 0..10_000 {
        let m = common::random_message(&mut rng);
        let bytes = encode_message(&m).map_err(|e| format!("message {i}: {e}"))?;
        let back = decode_message(&bytes).map_err(|e| format!("message {i}: {e}"))?;
        check(back == m, format!("message {i} changed"))?;
        check(
            encode_message(&back).unwrap() == bytes,
            format!("message {i} re-encodes differently"),
        )?;
    }
    for _ in 0..10_000 {
        let m = common::random_message(&mut rng);
        let bytes = common::mutate(&mut rng, encode_message(&m).unwrap());
        match std::panic::catch_unwind(|| decode_message(&bytes)) {
            Ok(Ok(_)) => parsed += 1,
            Ok(Err(_)) => rejected += 1,
            Err(_) => return Err("decoder panicked".into()),
        }
    }
    Ok(format!("10000 round trips byte-identical; 10000 mutations: {parsed} parsed, {rejected} rejected, 0 crashes"))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("DL oracle equivalence", c1_oracle_equivalence),
        ("amortization", c2_amortization),
        ("honest handshake soundness", c3_honest_soundness),
        ("end-to-end downgrade", c4_end_to_end),
        ("countermeasure matrix", c5_matrix),
        ("padding defense", c6_padding),
        ("warning-alert stall", c7_stall),
        ("False Start", c8_false_start),
        ("Pohlig-Hellman audit", c9_pohlig_hellman),
        ("population economics", c10_population),
        ("codec fuzz", c11_codec_fuzz),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let took = started.elapsed();
        match result {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail} [{took:.1?}]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {detail} [{took:.1?}]", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
