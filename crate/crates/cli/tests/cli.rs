use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn qds(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qds")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(rel)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn link_json(loss_db: f64, n_pulses: u64, seed: u64) -> String {
    format!(
        r#"{{
      "intensity": {{"mu": 0.4, "nu": 0.1, "p_mu": 0.5, "p_nu": 0.5, "p_z": 0.6, "p_x": 0.4}},
      "channel": {{"loss_db": {loss_db}, "detector_efficiency": 1.0, "dark_count_prob": 1e-7, "misalignment": 0.01, "pulse_rate_hz": 1e9}},
      "n_pulses": {n_pulses}, "seed": {seed}
    }}"#
    )
}

/// A small run: 10 dB, 1e7 pulses per link, a 2 kB document.
fn small_config(dir: &Path, extra: &str) -> PathBuf {
    std::fs::write(dir.join("doc.txt"), "The quick brown fox. ".repeat(100)).unwrap();
    let cfg = format!(
        r#"{{"links": {{"bob": {}, "charlie": {}}}, "targets": {{"eps_target": 1e-7}}, "message_path": "doc.txt", "signing_seed": 3{extra}}}"#,
        link_json(10.0, 10_000_000, 11),
        link_json(10.0, 10_000_000, 12),
    );
    let p = dir.join("run.json");
    std::fs::write(&p, cfg).unwrap();
    p
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&std::fs::read(path).unwrap()).unwrap()
}

#[test]
fn analyze_bundled_link() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let o = qds(&["analyze", s(&data("reference/100km_AC.json")), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&out);
    let keys = [
        "tau0", "tau1", "s_z0_l", "s_z1_l", "s_z0_u", "s_x1_l", "v_x1_u", "phi_z_u", "e_z", "h_min_per_L", "eps_rob",
        "eps_rep", "eps_for", "eps", "signature_len_bits", "signature_rate_tps",
    ];
    assert_eq!(r.as_object().unwrap().len(), keys.len());
    for k in keys {
        assert!(r.get(k).is_some(), "missing {k}");
    }
    let l = r["signature_len_bits"].as_u64().unwrap();
    assert!((712..=864).contains(&l), "L={l}");
    let rate = r["signature_rate_tps"].as_f64().unwrap();
    assert!((rate / 6.50 - 1.0).abs() <= 0.02, "R_S={rate}");

    // stdout when no --out is given, and explicit targets override the file's
    let o = qds(&["analyze", s(&data("reference/100km_AC.json")), "--eps-target", "1e-3", "--message-bits", "1000", "--lambda-ec", "1136046"]);
    assert_eq!(code(&o), 0);
    let r: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(r["signature_len_bits"].as_u64().unwrap() < l);
}

#[test]
fn analyze_failure_codes() {
    let dir = tempfile::tempdir().unwrap();
    let zero = dir.path().join("zero.json");
    std::fs::write(
        &zero,
        r#"{"intensity": {"mu": 0.4, "nu": 0.1, "p_mu": 0.5, "p_nu": 0.5, "p_z": 0.6, "p_x": 0.4},
            "tally": {"n_z_mu": 0, "n_z_nu": 0, "m_z_mu": 0, "m_z_nu": 0, "n_x_mu": 0, "n_x_nu": 0, "m_x_mu": 0, "m_x_nu": 0,
                      "n_z_total": 0, "accumulation_time_s": 1.0},
            "targets": {"eps_target": 1e-7, "message_len_bits": 1000000}}"#,
    )
    .unwrap();
    let o = qds(&["analyze", s(&zero)]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"intensity\": 4\n}").unwrap();
    let o = qds(&["analyze", s(&bad)]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.json:2:"), "{err}");

    // counts that break the tally invariants are input errors too
    let text = std::fs::read_to_string(&zero).unwrap().replace("\"n_z_total\": 0", "\"n_z_total\": 5");
    std::fs::write(&bad, text).unwrap();
    assert_eq!(code(&qds(&["analyze", s(&bad)])), 2);
}

#[test]
fn reproduce_table_reports_every_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t.json");
    let o = qds(&["reproduce-table", "--out", s(&out)]);
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["50km_AB", "50km_AC", "100km_AB", "100km_AC", "150km_AB", "150km_AC", "200km_AB", "200km_AC"] {
        assert!(text.contains(name), "{name} missing");
    }
    let r = json(&out);
    assert_eq!(r["rows"].as_array().unwrap().len(), 8);
    let all_pass = r["all_pass"].as_bool().unwrap();
    assert_eq!(code(&o), if all_pass { 0 } else { 1 });
    for row in r["rows"].as_array().unwrap() {
        let failed = !row["primary"]["pass"].as_bool().unwrap();
        // rows outside tolerance are flagged and the alternatives evaluated
        assert_eq!(row["alternatives"].as_array().unwrap().len(), if failed { 3 } else { 0 });
        if failed {
            assert!(text.contains(&format!("{} (", row["name"].as_str().unwrap())));
            assert!(text.contains("outside tolerance"));
        }
    }
}

#[test]
fn simulate_is_deterministic_and_transport_transparent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let o = qds(&["simulate", s(&cfg), "--out-dir", s(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["outcome.json", "report_bob.json", "report_charlie.json", "summary.txt"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
    let outcome = json(&a.join("outcome.json"));
    assert_eq!(outcome["bob"], "Accept");
    assert_eq!(outcome["charlie"], "Accept");
    assert!(outcome["eps"].as_f64().unwrap() <= 1e-7);
    // positions to both receivers, then the bundle to Bob
    assert_eq!(outcome["transcripts"]["alice"].as_array().unwrap().len(), 3);

    let sock_cfg = small_config(dir.path(), r#", "transport": "socket""#);
    let c = dir.path().join("c");
    let o = qds(&["simulate", s(&sock_cfg), "--out-dir", s(&c)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let mut over_socket = json(&c.join("outcome.json"));
    assert_eq!(over_socket["session"]["transport"], "socket");
    over_socket["session"]["transport"] = "in-process".into();
    assert_eq!(over_socket, outcome);
}

#[test]
fn tampering_bob_makes_charlie_reject() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), r#", "adversary": {"bob_tamper": true}"#);
    let out = dir.path().join("o");
    let o = qds(&["simulate", s(&cfg), "--out-dir", s(&out)]);
    assert_eq!(code(&o), 6);
    let outcome = json(&out.join("outcome.json"));
    assert_eq!(outcome["bob"], "Accept");
    assert_eq!(outcome["charlie"]["Reject"], "DigestMismatch");
}

#[test]
fn simulation_and_config_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), "");
    let text = std::fs::read_to_string(&cfg).unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, text.replacen("\"misalignment\": 0.01", "\"misalignment\": 2.0", 1)).unwrap();
    assert_eq!(code(&qds(&["simulate", s(&bad), "--out-dir", s(dir.path())])), 4);
    // far too few pulses for any secure length
    std::fs::write(&bad, text.replace("10000000", "20000")).unwrap();
    assert_eq!(code(&qds(&["simulate", s(&bad), "--out-dir", s(dir.path())])), 3);
    std::fs::write(&bad, text.replace("\"charlie\"", "\"carol\"")).unwrap();
    assert_eq!(code(&qds(&["simulate", s(&bad), "--out-dir", s(dir.path())])), 2);
}

#[test]
fn keygen_sign_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = small_config(d, "");
    let keys = d.join("keys");
    let o = qds(&["keygen-sim", s(&cfg), "--out-dir", s(&keys)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let session = json(&keys.join("session.json"));
    let l = session["len_bits"].as_u64().unwrap();
    let (alice, bob, charlie) = (keys.join("alice.store"), keys.join("bob.store"), keys.join("charlie.store"));
    let snapshot = |tag: &str| {
        for f in [&bob, &charlie] {
            std::fs::copy(f, f.with_extension(tag)).unwrap();
        }
    };
    let restore = |tag: &str| {
        for f in [&bob, &charlie] {
            std::fs::copy(f.with_extension(tag), f).unwrap();
        }
    };

    let doc = d.join("doc.txt");
    let bundle = d.join("sig.qds");
    let o = qds(&["sign", s(&doc), "--store", s(&alice), "--session", s(&keys.join("session.json")), "--out", s(&bundle)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    snapshot("before");

    // flipping any payload byte of the message is caught
    let bytes = std::fs::read(&bundle).unwrap();
    let needle = b"quick brown";
    let at = bytes.windows(needle.len()).position(|w| w == needle).unwrap();
    let mut flipped = bytes.clone();
    flipped[at] ^= 0x01;
    let bad = d.join("bad.qds");
    std::fs::write(&bad, &flipped).unwrap();
    let o = qds(&["verify", s(&bad), "--bob-store", s(&bob), "--charlie-store", s(&charlie)]);
    assert_eq!(code(&o), 6, "{}", String::from_utf8_lossy(&o.stdout));
    assert!(String::from_utf8_lossy(&o.stdout).contains("reject"));

    restore("before");
    let o = qds(&["verify", s(&bundle), "--bob-store", s(&bob), "--charlie-store", s(&charlie)]);
    assert_eq!(code(&o), 0, "{}{}", String::from_utf8_lossy(&o.stdout), String::from_utf8_lossy(&o.stderr));
    assert_eq!(String::from_utf8_lossy(&o.stdout), "Bob: accept\nCharlie: accept\n");
    // the positions are spent now
    let o = qds(&["verify", s(&bundle), "--bob-store", s(&bob), "--charlie-store", s(&charlie)]);
    assert_eq!(code(&o), 7);

    // a truncated bundle and a corrupted store are malformed input
    std::fs::write(&bad, &bytes[..bytes.len() - 3]).unwrap();
    assert_eq!(code(&qds(&["verify", s(&bad), "--bob-store", s(&bob), "--charlie-store", s(&charlie)])), 8);
    let mut store = std::fs::read(&bob).unwrap();
    let mid = store.len() / 2;
    store[mid] ^= 0x80;
    std::fs::write(&bob, &store).unwrap();
    assert_eq!(code(&qds(&["verify", s(&bundle), "--bob-store", s(&bob), "--charlie-store", s(&charlie)])), 8);
    assert_eq!(code(&qds(&["verify", s(&bundle), "--bob-store", s(&charlie), "--charlie-store", s(&bob)])), 8);

    // keep signing until fewer than 2L unused bits remain
    let key_bits = session["key_bits"].as_u64().unwrap();
    let session_file = keys.join("session.json");
    let sign_once = |out: &Path| qds(&["sign", s(&doc), "--store", s(&alice), "--session", s(&session_file), "--out", s(out)]);
    let mut signed = 1;
    loop {
        let o = sign_once(&d.join("next.qds"));
        if code(&o) != 0 {
            assert_eq!(code(&o), 7, "{}", String::from_utf8_lossy(&o.stderr));
            break;
        }
        signed += 1;
    }
    assert_eq!(signed, key_bits / (2 * l));
    let before = std::fs::read(&alice).unwrap();
    let o = sign_once(&d.join("x.qds"));
    assert_eq!(code(&o), 7);
    assert_eq!(std::fs::read(&alice).unwrap(), before, "a failed sign must not touch the store");
    assert!(!d.join("x.qds").exists());
}
