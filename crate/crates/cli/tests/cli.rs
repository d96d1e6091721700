use std::path::Path;
use std::process::{Command, Output};

const RAMP: &str = r#"{"kind":"ramp-bec","start":0.3,"end":0.7}"#;

fn nspolar(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nspolar")).args(args).env_remove("NSPOLAR_THREADS").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

/// Non-comment lines of a CSV report.
fn rows(text: &str) -> Vec<Vec<String>> {
    text.lines().filter(|l| !l.starts_with('#')).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn unknown_flag_is_a_usage_error_without_output() {
    let o = nspolar(&["eta-estimate", "--bogus"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(o.stdout.is_empty());
    let o = nspolar(&[]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(nspolar(&["--help"]).status.code(), Some(0));
    let o = nspolar(&["--version"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains(nspolar::VERSION));
}

#[test]
fn eta_estimate_reports_eta_and_profile() {
    let dir = tempfile::tempdir().unwrap();
    let prof = dir.path().join("h.csv");
    let o = nspolar(&["eta-estimate", "--b", "0.72", "--resolution", "1e-4", "--profile", p(&prof)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = stdout(&o);
    assert!(text.starts_with(&format!("# nspolar {}", nspolar::VERSION)));
    assert!(text.contains("\"subcommand\":\"eta-estimate\""));
    let r = rows(&text);
    assert_eq!(r[0], ["b", "eta", "sup_z"]);
    let eta: f64 = r[1][1].parse().unwrap();
    assert!((0.138..=0.140).contains(&eta), "{eta}");

    let prof = std::fs::read_to_string(&prof).unwrap();
    let pr = rows(&prof);
    assert_eq!(pr[0], ["z", "h(z)"]);
    assert!(pr.len() > 9000);
    assert!(pr[1..].iter().all(|r| r[1].parse::<f64>().unwrap() < 1.0));

    let o = nspolar(&["eta-estimate", "--b", "0.7,0.72", "--resolution", "1e-3"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(rows(&stdout(&o)).len(), 3);
    let o = nspolar(&["eta-estimate", "--b", "1.5"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn constants_validate_mu() {
    let o = nspolar(&["constants", "--mu", "10.5", "--pe", "0.01", "--n", "14"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
    assert_eq!(String::from_utf8_lossy(&o.stderr).lines().count(), 1);
    let o = nspolar(&["constants", "--mu", "10.79", "--pe", "0.01", "--n", "14"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["library_version"], nspolar::VERSION);
    assert_eq!(v["config"]["command"]["mu"], 10.79);
    assert!(v["constants"]["rho"].as_f64().unwrap() > 0.12);
    assert_eq!(v["constants"]["n"], 14);
}

#[test]
fn speed_trace_reports_levels_and_bound() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq.csv");
    let body: String = (0..256).map(|i| format!("bec,{}\n", 0.05 + 0.9 * i as f64 / 255.0)).collect();
    std::fs::write(&seq, body).unwrap();
    let o = nspolar(&["speed-trace", "--channels", p(&seq), "--b", "0.72", "--tau", "0.1667"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&stdout(&o));
    assert_eq!(r[0], ["level", "E", "eta_level"]);
    assert_eq!(r[9][0], "8");
    assert_eq!(r[10], ["eta_bar", "rho", "c_rho", "bound_satisfied"]);
    assert_eq!(r[11][3], "true");
}

#[test]
fn construct_encode_decode_simulate_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let code = dir.path().join("code.json");
    let o = nspolar(&["construct", "--sequence", RAMP, "--n", "10", "--pe", "0.1", "--mu", "10.79", "--out", p(&code)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let r = rows(&stdout(&o));
    assert_eq!(r[0][0], "n");
    assert_eq!(r[1][0], "10");
    let spec = nspolar::CodeSpec::load(&code).unwrap();
    let raw: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&code).unwrap()).unwrap();
    assert_eq!(raw["version"], "nspolar-codespec-1");
    assert_eq!(raw["run_config"]["command"]["subcommand"], "construct");

    let out = dir.path().join("results.csv");
    let o = nspolar(&["simulate", "--code", p(&code), "--sequence", RAMP, "--n", "10", "--trials", "4000", "--seed", "7", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    let r = rows(&text);
    assert_eq!(r[0], ["trials", "errors", "fer", "ci_lo", "ci_hi", "rate", "union_bound"]);
    let fer: f64 = r[1][2].parse().unwrap();
    let hi: f64 = r[1][4].parse().unwrap();
    assert!(fer <= 0.1 + (hi - fer));

    // a second run with another thread count gives the same report
    let again = dir.path().join("again.csv");
    let o = Command::new(env!("CARGO_BIN_EXE_nspolar"))
        .args(["simulate", "--code", p(&code), "--sequence", RAMP, "--n", "10", "--trials", "4000", "--seed", "7", "--out", p(&again)])
        .env("NSPOLAR_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(rows(&std::fs::read_to_string(&again).unwrap()), r);

    // encode/decode: the ramp code carries no information at this length,
    // so the codeword is all zeros and decoding returns nothing
    let info = dir.path().join("info.hex");
    std::fs::write(&info, "").unwrap();
    let cw = dir.path().join("cw.hex");
    let o = nspolar(&["encode", "--code", p(&code), "--input", p(&info), "--out", p(&cw)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let hex = std::fs::read_to_string(&cw).unwrap();
    assert_eq!(hex.trim(), "0".repeat(spec.block_len / 4));
    let o = nspolar(&["decode", "--code", p(&code), "--sequence", RAMP, "--n", "10", "--received", p(&cw)]);
    assert_eq!(o.status.code(), Some(0));
}

#[test]
fn decode_recovers_information_through_erasures() {
    let dir = tempfile::tempdir().unwrap();
    let seq = dir.path().join("seq.csv");
    std::fs::write(&seq, "bec,0.5\n".repeat(16)).unwrap();
    let chs = nspolar::channels::load_channel_file(&seq).unwrap();
    let spec = nspolar::construct::single_stage(&chs, &nspolar::CombinePolicy::Always, 0.72, 0.5).unwrap();
    let spec = nspolar::construct::with_best_positions(spec, 4).unwrap();
    let code = dir.path().join("code.json");
    spec.save(&code).unwrap();

    let info = dir.path().join("info.hex");
    // hex is packed into bytes, most significant bit first
    std::fs::write(&info, "b0\n").unwrap();
    let o = nspolar(&["encode", "--code", p(&code), "--input", p(&info)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let cw_hex = stdout(&o);
    let cw = nspolar::codec::hex_to_bits(cw_hex.trim(), 16).unwrap();
    assert_eq!(cw, nspolar::encode(&spec, &[1, 0, 1, 1]).unwrap());

    // erase the first position and flip its hard value
    let mut hard = cw.clone();
    hard[0] ^= 1;
    let received = dir.path().join("y.hex");
    std::fs::write(&received, nspolar::codec::bits_to_hex(&hard)).unwrap();
    let mut mask = vec![0u8; 16];
    mask[0] = 1;
    let erasures = dir.path().join("e.hex");
    std::fs::write(&erasures, nspolar::codec::bits_to_hex(&mask)).unwrap();
    let o = nspolar(&["decode", "--code", p(&code), "--channels", p(&seq), "--received", p(&received), "--erasures", p(&erasures)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(stdout(&o).trim(), "b0");

    let o = nspolar(&["decode", "--code", p(&code), "--channels", p(&seq), "--received", p(&info)]);
    assert_eq!(o.status.code(), Some(2), "wrong hex length is a validation failure");
    let missing = dir.path().join("missing.json");
    let o = nspolar(&["encode", "--code", p(&missing), "--input", p(&info)]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn bad_thread_variable_is_rejected() {
    let o = Command::new(env!("CARGO_BIN_EXE_nspolar"))
        .args(["constants", "--n", "10"])
        .env("NSPOLAR_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let o = nspolar(&["selftest"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert_eq!(stdout(&o).lines().filter(|l| l.ends_with("PASS")).count(), 7);
}
