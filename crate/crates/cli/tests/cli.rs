use std::path::Path;
use std::process::{Command, Output};

use burstsim_core::netlist::REFERENCE_DECK;

fn burstsim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_burstsim")).args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn deck(dir: &Path, text: &str) -> String {
    let p = dir.join("complete.cir");
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn check_reports_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let o = burstsim(&["check", &deck(dir.path(), REFERENCE_DECK)]);
    assert!(o.status.success());
    let s = stdout(&o);
    assert!(s.contains("g1 = 1.4414"));
    assert!(s.contains("vs3 = 3.7820"));
    assert!(s.contains("g1*g2 >= g3: pass"));
    assert!(s.contains("g7 >= 1: pass"));
}

#[test]
fn sim_writes_trace_and_classifies() {
    let dir = tempfile::tempdir().unwrap();
    let d = deck(dir.path(), REFERENCE_DECK);
    let out = dir.path().join("trace.csv");
    let svg = dir.path().join("trace.svg");
    let o = burstsim(&["sim", &d, "--out", out.to_str().unwrap(), "--svg", svg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("mode: bursting"));
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("t,vx,vy,vz\n"));
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));

    let o = burstsim(&["classify", out.to_str().unwrap()]);
    assert!(stdout(&o).contains("mode: bursting"));

    let o = burstsim(&["sim", &d, "--ri2", "34.5k", "--t-end", "40ms", "--out", out.to_str().unwrap()]);
    assert!(stdout(&o).contains("mode: tonic"));
}

#[test]
fn sweep_writes_schema() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let o = burstsim(&[
        "sweep",
        &deck(dir.path(), REFERENCE_DECK),
        "--vz",
        "4.4",
        "--vy",
        "0:5:0.01",
        "--direction",
        "down",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let text = std::fs::read_to_string(&out).unwrap();
    assert!(text.starts_with("vy,vx,branch,stability\n5,"));
    assert_eq!(text.lines().count(), 502);
    assert!(stdout(&o).contains("jump"));
}

#[test]
fn nf_presets() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("nf.csv");
    let o = burstsim(&["nf", "--preset", "nf-burst", "--t-end", "3000", "--out", out.to_str().unwrap()]);
    assert!(stdout(&o).contains("mode: bursting"));
    assert!(std::fs::read_to_string(&out).unwrap().starts_with("t,x,y,z\n"));
    let o = burstsim(&["nf", "--preset", "nf-tonic", "--t-end", "3000"]);
    assert!(stdout(&o).contains("mode: tonic"));
    assert!(!burstsim(&["nf", "--preset", "nf-chaos"]).status.success());
}

#[test]
fn excite_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("table.csv");
    let o = burstsim(&["excite", &deck(dir.path(), REFERENCE_DECK), "--mode", "tonic", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("amplitude,response_duration,mean_spike_frequency,spikes\n"));
}

#[test]
fn bad_deck_fails_with_message() {
    let dir = tempfile::tempdir().unwrap();
    let text = REFERENCE_DECK.replace("coF 18  0 4.7u\n", "");
    let o = burstsim(&["check", &deck(dir.path(), &text)]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("coF"));
    let o = burstsim(&["check", &deck(dir.path(), "vcc 5 0 dc 5X\n")]);
    assert!(String::from_utf8_lossy(&o.stderr).contains("unknown SI suffix"));
}
