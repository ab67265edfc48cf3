use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use metacircuit::lattice::{
    mech_to_circuit, LatticeDocument, LatticeSpec, MechanicalParams, ScalingFactor, DEFAULT_INNER_MASS,
    DEFAULT_OUTER_MASS,
};
use metacircuit::simulator::assemble;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_metacircuit"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn ok(out: Output) -> Output {
    assert_eq!(code(&out), 0, "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

const SMALL_DATASET: &str = r#"{
  "classes": [
    {"center_hz": 30, "sigma_s": 0.05, "amplitude": 1, "count": 3},
    {"center_hz": 50, "sigma_s": 0.05, "amplitude": 1, "count": 3},
    {"center_hz": 70, "sigma_s": 0.05, "amplitude": 1, "count": 3}
  ],
  "test_count": 2, "snr_db": 20, "duration_s": 0.4, "rate_hz": 1000, "jitter_s": 0.05, "seed": 5
}"#;

fn small_dataset() -> TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("ds.json"), SMALL_DATASET).unwrap();
    ok(run(dir.path(), &["gen-dataset", "ds.json", "--out", "data"]));
    dir
}

/// A 5×5 system with every cell resonating at 50 Hz, written as a document.
fn uniform_system(dir: &Path) -> PathBuf {
    let spec = LatticeSpec::default_5x5();
    let k_n = DEFAULT_INNER_MASS * (2.0 * std::f64::consts::PI * 50.0_f64).powi(2);
    let mech = MechanicalParams::uniform(&spec, DEFAULT_OUTER_MASS, DEFAULT_INNER_MASS, k_n, 300.0);
    let s = ScalingFactor::new(1e-8).unwrap();
    let doc = LatticeDocument::new(&spec, &mech_to_circuit(&mech, s).unwrap(), s).unwrap();
    let path = dir.join("system.json");
    fs::write(&path, doc.to_json().unwrap()).unwrap();
    path
}

fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_path(path).unwrap();
    let mut rows = vec![r.headers().unwrap().iter().map(String::from).collect()];
    rows.extend(r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()));
    rows
}

#[test]
fn default_dataset_counts_and_reproducible_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(run(dir.path(), &["gen-dataset", "--seed", "7", "--out", "a"]));
    let text = stdout(&out);
    assert!(text.contains("train: 360 samples (per class 120/120/120)"), "{text}");
    assert!(text.contains("test: 60 samples (per class 20/20/20)"), "{text}");
    assert_eq!(fs::read_dir(dir.path().join("a/train")).unwrap().count(), 360);
    assert_eq!(fs::read_dir(dir.path().join("a/test")).unwrap().count(), 60);
    ok(run(dir.path(), &["gen-dataset", "--seed", "7", "--out", "b", "--threads", "1"]));
    for f in ["manifest.json", "train/00000_c0.csv", "test/00419_c2.csv"] {
        assert_eq!(
            fs::read(dir.path().join("a").join(f)).unwrap(),
            fs::read(dir.path().join("b").join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn dataset_errors_map_to_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&run(dir.path(), &["gen-dataset", "missing.json", "--seed", "1", "--out", "d"])), 2);
    assert_eq!(code(&run(dir.path(), &["gen-dataset", "--out", "d"])), 1);
    assert_eq!(code(&run(dir.path(), &["gen-dataset", "--seed", "1"])), 1);
    assert_eq!(code(&run(dir.path(), &["no-such-command"])), 1);
    assert_eq!(code(&run(dir.path(), &["--help"])), 0);

    fs::write(dir.path().join("ds.json"), SMALL_DATASET).unwrap();
    ok(run(dir.path(), &["gen-dataset", "ds.json", "--out", "d"]));
    assert_eq!(code(&run(dir.path(), &["gen-dataset", "ds.json", "--out", "d"])), 2);
    ok(run(dir.path(), &["gen-dataset", "ds.json", "--out", "d", "--force"]));
}

#[test]
fn train_writes_metrics_checkpoints_and_resumes_identically() {
    let dir = small_dataset();
    let p = dir.path();
    fs::write(p.join("train.json"), r#"{"dataset": "data", "epochs": 4, "batch_size": 4, "lr": 0.2}"#).unwrap();
    assert_eq!(code(&run(p, &["train", "train.json", "--out", "nos"])), 1);

    ok(run(p, &["train", "train.json", "--seed", "3", "--out", "full"]));
    let metrics = fs::read_to_string(p.join("full/metrics.csv")).unwrap();
    let mut lines = metrics.lines();
    assert_eq!(lines.next(), Some("epoch,loss,train_acc,val_acc"));
    assert_eq!(lines.count(), 4);
    for f in ["checkpoints/epoch_0004.json", "trained.json", "trained_e96.json", "final.json"] {
        assert!(p.join("full").join(f).exists(), "{f}");
    }
    let final_json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(p.join("full/final.json")).unwrap()).unwrap();
    assert!(final_json["export"]["circuit"]["r_internal"].is_array());
    assert!(final_json["export"]["quantization"]["params"]["r_coupling"].is_array());

    ok(run(
        p,
        &["train", "train.json", "--seed", "3", "--out", "resumed", "--resume", "full/checkpoints/epoch_0002.json"],
    ));
    ok(run(p, &["train", "train.json", "--seed", "3", "--out", "single", "--threads", "1"]));
    for other in ["resumed", "single"] {
        for f in ["metrics.csv", "trained.json", "final.json", "checkpoints/epoch_0004.json"] {
            assert_eq!(
                fs::read(p.join("full").join(f)).unwrap(),
                fs::read(p.join(other).join(f)).unwrap(),
                "{other}/{f}"
            );
        }
    }
    assert_eq!(code(&run(p, &["train", "train.json", "--seed", "3", "--out", "full"])), 2);
}

#[test]
fn classify_reports_verdicts_and_confusion() {
    let dir = small_dataset();
    let p = dir.path();
    let system = uniform_system(p);
    let sys = system.to_str().unwrap();
    let labeled: serde_json::Value =
        serde_json::from_str(&stdout(&ok(run(p, &["classify", sys, "--dataset", "data"])))).unwrap();
    let results = labeled["results"].as_array().unwrap();
    assert_eq!(results.len(), 6);
    for r in results {
        assert_eq!(r["energies"].as_array().unwrap().len(), 3);
        let total: f64 = r["probs"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);
        assert!(r["class"].as_u64().unwrap() < 3);
        assert!(r["file"].as_str().unwrap().starts_with("test"));
    }
    let confusion: u64 = labeled["confusion"]
        .as_array()
        .unwrap()
        .iter()
        .flat_map(|row| row.as_array().unwrap().iter().map(|x| x.as_u64().unwrap()))
        .sum();
    assert_eq!(confusion, 6);
    assert!(labeled["accuracy"].is_f64());

    let unlabeled: serde_json::Value =
        serde_json::from_str(&stdout(&ok(run(p, &["classify", sys, "data/test/00009_c0.csv", "--rate", "1000"])))).unwrap();
    assert_eq!(unlabeled["results"].as_array().unwrap().len(), 1);
    assert!(unlabeled.get("confusion").is_none());
    assert_eq!(
        unlabeled["results"][0]["energies"],
        results.iter().find(|r| r["file"] == "test/00009_c0.csv").unwrap()["energies"]
    );

    assert_eq!(code(&run(p, &["classify", sys])), 1);
}

#[test]
fn simulate_writes_time_series_and_flags_instability() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let system = uniform_system(p);
    let sys = system.to_str().unwrap();
    let input: String = (0..200)
        .map(|i| format!("{},{}\n", i as f64 / 1000.0, if i == 10 { 1.0 } else { 0.0 }))
        .collect();
    fs::write(p.join("in.csv"), format!("t,value\n{input}")).unwrap();
    ok(run(p, &["simulate", sys, "in.csv", "--out", "sim.csv"]));
    let rows = csv_rows(&p.join("sim.csv"));
    assert_eq!(rows[0], ["t_s", "out1_v", "out2_v", "out3_v"]);
    assert!(rows.len() > 200);
    assert_eq!(code(&run(p, &["simulate", sys, "in.csv", "--out", "sim.csv"])), 2);
    ok(run(p, &["simulate", sys, "in.csv", "--all", "--out", "all.csv", "--force"]));
    assert_eq!(csv_rows(&p.join("all.csv"))[0].len(), 1 + 42);

    let doc = LatticeDocument::load(&system).unwrap();
    let limit = assemble(&doc.spec, &doc.circuit().unwrap()).unwrap().max_stable_dt();
    assert!(limit < 0.01);
    let coarse: String = (0..20).map(|i| format!("{},{}\n", i as f64 / 100.0, 1.0)).collect();
    fs::write(p.join("coarse.csv"), format!("t,value\n{coarse}")).unwrap();
    assert_eq!(code(&run(p, &["simulate", sys, "coarse.csv", "--dt", "0.01"])), 3);
}

#[test]
fn landscape_has_one_row_per_active_cell() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let system = uniform_system(p);
    ok(run(p, &["landscape", system.to_str().unwrap(), "--freq", "70", "--out", "land"]));
    let cells = csv_rows(&p.join("land/cells.csv"));
    assert_eq!(
        cells[0],
        ["cell", "row", "col", "z_eff_ohm", "log10_abs_z_ohm", "flag", "current_a"]
    );
    assert_eq!(cells.len() - 1, 21);
    let edges = csv_rows(&p.join("land/edges.csv"));
    assert_eq!(edges[0], ["a", "b", "current_a", "log10_abs_current_a", "sign"]);
    assert_eq!(edges.len() - 1, 40);
    // every cell is above its f0 = 50 Hz and below f1, so z_eff > 0
    for row in &cells[1..] {
        assert!(row[3].parse::<f64>().unwrap() > 0.0);
    }
}

#[test]
fn netlist_quantizes_every_resistor() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let system = uniform_system(p);
    ok(run(p, &["export-netlist", system.to_str().unwrap(), "--series", "e96", "--out", "net.csv"]));
    let rows = csv_rows(&p.join("net.csv"));
    assert_eq!(rows[0], ["ref", "kind", "value", "unit", "node_a", "node_b", "quantized", "rel_error"]);
    let resistors: Vec<&Vec<String>> = rows[1..].iter().filter(|r| r[1] == "R").collect();
    assert_eq!(resistors.len(), 21 + 40);
    for r in resistors {
        let value: f64 = r[2].parse().unwrap();
        let q: f64 = r[6].parse().unwrap();
        assert!((q / value - 1.0).abs() <= 0.0149, "{r:?}");
        let mantissa = q / 10f64.powf(q.log10().floor() - 2.0);
        assert!((mantissa - mantissa.round()).abs() < 1e-6, "{q}");
    }
    for r in rows[1..].iter().filter(|r| r[1] == "FDNR") {
        assert!(r[6].is_empty());
    }
}

#[test]
fn swept_sine_agrees_with_ac_away_from_resonances() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    let system = uniform_system(p);
    let sys = system.to_str().unwrap();
    let band = ["--f-start", "20", "--f-end", "40", "--step-hz", "1"];
    let mut ac_args = vec!["ac-sweep", sys, "--method", "ac", "--out", "ac.csv"];
    ac_args.extend(band);
    ok(run(p, &ac_args));
    let mut ss_args = vec!["sweep", sys, "--method", "swept-sine", "--out", "ss.csv"];
    ss_args.extend(band);
    ok(run(p, &ss_args));
    let ac = csv_rows(&p.join("ac.csv"));
    let ss = csv_rows(&p.join("ss.csv"));
    assert_eq!(ac[0], ["freq_hz", "h1_ohm", "h2_ohm", "h3_ohm", "flag"]);
    assert_eq!(ac[0], ss[0]);
    assert_eq!(ac.len(), 22);

    let doc = LatticeDocument::load(&system).unwrap();
    let eig = assemble(&doc.spec, &doc.circuit().unwrap()).unwrap().eigenfrequencies_hz();
    let mut compared = 0;
    for (a, s) in ac[1..].iter().zip(&ss[1..]) {
        let f: f64 = a[0].parse().unwrap();
        if eig.iter().any(|e| (e - f).abs() < 2.0) {
            continue;
        }
        for ch in 1..=3 {
            let (x, y): (f64, f64) = (a[ch].parse().unwrap(), s[ch].parse().unwrap());
            assert!((y / x - 1.0).abs() < 0.05, "{f} Hz ch{ch}: ac {x} swept {y}");
        }
        compared += 1;
    }
    assert!(compared >= 5, "only {compared} bins away from resonances");
}
