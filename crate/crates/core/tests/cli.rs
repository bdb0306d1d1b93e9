use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ithaca-kit"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn copy_fixture(dir: &Path, name: &str) -> PathBuf {
    let to = dir.join(name);
    fs::copy(data(name), &to).unwrap();
    to
}

#[test]
fn instrument_writes_suffixed_files() {
    let dir = tempfile::tempdir().unwrap();
    let p = copy_fixture(dir.path(), "mul_pair.sir");
    let o = bin()
        .args(["instrument", "--pass", "arith", "--block-size", "1", "--interleaving", "1"])
        .arg(&p)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["mul_pair-Arith.sir", "mul_pair-Arith.map.json", "mul_pair-Arith.stats.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let map: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("mul_pair-Arith.map.json")).unwrap()).unwrap();
    assert_eq!(map["schema_version"], 1);
    assert_eq!(map["sites"].as_array().unwrap().len(), 2);
    let text = fs::read_to_string(dir.path().join("mul_pair-Arith.sir")).unwrap();
    assert!(text.starts_with("instrumented Arith"));
    assert!(text.contains("%r0.d = mul i64 %a, %b #val"));

    let o = bin().args(["instrument", "--pass", "arith,memdiv,br"]).arg(&p).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.path().join("mul_pair-Arith+MemDiv+Br.sir").exists());
}

#[test]
fn run_reports_detections_and_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let p = copy_fixture(dir.path(), "mul_pair.sir");
    assert_eq!(code(&bin().args(["instrument", "--pass", "arith"]).arg(&p).output().unwrap()), 0);
    let faults = dir.path().join("f.json");
    fs::write(
        &faults,
        r#"{"kind": "inconsistent", "target": {"opcode": "mul"},
            "trigger": {"producer_in_flight": {"operand": 0, "window": 2}},
            "corruption": {"stuck_operand_zero": 0}}"#,
    )
    .unwrap();
    let instrumented = dir.path().join("mul_pair-Arith.sir");
    let o = bin()
        .arg("run")
        .arg(&instrumented)
        .arg("--faults")
        .arg(&faults)
        .args(["--budget", "1000000", "--fail-on-detect"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 3);
    let stdout = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<serde_json::Value> = stdout.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0]["wrongness"], "original_wrong");
    assert_eq!(lines[1]["outcome"]["status"], "completed");

    let o = bin().arg("run").arg(&instrumented).arg("--fail-on-detect").output().unwrap();
    assert_eq!(code(&o), 0);

    let trace = dir.path().join("t.jsonl");
    let o = bin().arg("run").arg(&instrumented).arg("--trace").arg(&trace).output().unwrap();
    assert_eq!(code(&o), 0);
    let steps = fs::read_to_string(&trace).unwrap().lines().count();
    assert!(steps > 5);
}

#[test]
fn halt_on_error_stops() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("p.sir");
    fs::write(&p, "fn @main(%x: i64) -> i64 { entry: %ok = icmp eq i64 %x, 1 report_error value i64 0, %ok, %x, 1 ret %x }").unwrap();
    let o = bin().arg("run").arg(&p).args(["--args", "2", "--halt-on-error"]).output().unwrap();
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    assert!(out.contains(r#""trap":"error_reported""#), "{out}");
    let o = bin().arg("run").arg(&p).args(["--args", "2"]).output().unwrap();
    assert!(String::from_utf8(o.stdout).unwrap().contains(r#""value":2"#));
}

#[test]
fn exit_codes_follow_contract() {
    assert_eq!(code(&bin().args(["run", "--no-such-flag"]).output().unwrap()), 1);
    assert_eq!(code(&bin().arg("frobnicate").output().unwrap()), 1);
    assert_eq!(code(&bin().output().unwrap()), 1);
    assert_eq!(code(&bin().args(["validate", "/nonexistent.sir"]).output().unwrap()), 2);
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.sir");
    fs::write(&bad, "fn @main() -> i64 { entry: %x = add i64 %y, 1 ret %x }").unwrap();
    assert_eq!(code(&bin().arg("validate").arg(&bad).output().unwrap()), 2);
    assert_eq!(code(&bin().arg("validate").arg(data("all_opcodes.sir")).output().unwrap()), 0);
    let o = bin().arg("run").arg(data("mul_pair.sir")).args(["--args", "1"]).output().unwrap();
    assert_eq!(code(&o), 2, "arity mismatch is an input error");
    assert_eq!(code(&bin().arg("--help").output().unwrap()), 0);
    let v = bin().arg("--version").output().unwrap();
    assert_eq!(code(&v), 0);
    assert!(String::from_utf8(v.stdout).unwrap().contains(env!("CARGO_PKG_VERSION")));
}

#[test]
fn help_documents_flags() {
    let o = bin().args(["run", "--help"]).output().unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    for flag in ["--faults", "--budget", "--seed", "--args", "--input", "--trace", "--halt-on-error", "--fail-on-detect"] {
        assert!(text.contains(flag), "{flag}");
    }
    let o = bin().args(["campaign", "--help"]).output().unwrap();
    let text = String::from_utf8(o.stdout).unwrap();
    for flag in ["--config", "--output", "--format", "--jobs", "--seed"] {
        assert!(text.contains(flag), "{flag}");
    }
}

fn campaign_config(dir: &Path) -> PathBuf {
    copy_fixture(dir, "chain16.sir");
    let c = dir.join("c.json");
    fs::write(
        &c,
        r#"{
          "variants": [
            {"name": "Arith", "program": "chain16.sir", "instrument": {"passes": ["arith"]}},
            {"name": "Arith-dep", "program": "chain16.sir", "instrument": {"passes": ["arith"], "block_size": "dep"}},
            {"name": "plain", "program": "chain16.sir"}
          ],
          "faults": [{"kind": "inconsistent", "target": {"opcode": "mul"}, "trigger": {"port_equals": 1},
                      "corruption": {"bitflip": 8}, "probability": 0.3}],
          "runs": 25,
          "seed": 5
        }"#,
    )
    .unwrap();
    c
}

#[test]
fn campaign_is_deterministic_and_atomic() {
    let dir = tempfile::tempdir().unwrap();
    let c = campaign_config(dir.path());
    let mut reports = Vec::new();
    for jobs in ["1", "3"] {
        let out = dir.path().join(format!("r{jobs}.json"));
        let o = bin().arg("campaign").arg("--config").arg(&c).arg("-o").arg(&out).args(["--jobs", jobs]).output().unwrap();
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        reports.push(fs::read(&out).unwrap());
    }
    assert_eq!(reports[0], reports[1]);
    let report: serde_json::Value = serde_json::from_slice(&reports[0]).unwrap();
    assert_eq!(report["schema_version"], 1);
    assert_eq!(report["tool_version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(report["variants"].as_array().unwrap().len(), 3);

    let o = bin().arg("campaign").arg("--config").arg(&c).args(["--seed", "6"]).output().unwrap();
    assert_ne!(o.stdout, reports[0]);

    let csv = dir.path().join("r.csv");
    let o = bin().arg("campaign").arg("--config").arg(&c).arg("-o").arg(&csv).args(["--format", "csv"]).output().unwrap();
    assert_eq!(code(&o), 0);
    // Header plus four opcodes for each instrumented variant.
    assert_eq!(fs::read_to_string(&csv).unwrap().lines().count(), 1 + 4 + 1);

    let o = bin().arg("report").arg(dir.path().join("r1.json")).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(String::from_utf8(o.stdout).unwrap().contains("Arith: EDR"));
    let o = bin().arg("report").arg(dir.path().join("r1.json")).args(["--format", "json"]).output().unwrap();
    assert_eq!(o.stdout, reports[0]);

    let broken = dir.path().join("broken.json");
    fs::write(&broken, r#"{"variants": [{"name": "x", "program": "missing.sir"}], "runs": 1}"#).unwrap();
    let out = dir.path().join("never.json");
    let o = bin().arg("campaign").arg("--config").arg(&broken).arg("-o").arg(&out).output().unwrap();
    assert_eq!(code(&o), 2);
    assert!(!out.exists());
}

#[test]
fn fuzz_finds_no_mismatch() {
    let o = bin().args(["fuzz", "--seed", "3", "--count", "15", "--size", "30"]).output().unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let last: serde_json::Value = serde_json::from_str(String::from_utf8(o.stdout).unwrap().lines().last().unwrap()).unwrap();
    assert_eq!(last["mismatches"], 0);
    assert_eq!(last["executions"], 15 * 7 * 3);
}
