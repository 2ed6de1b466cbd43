use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use loadmon::dataio::read_profile_csv;
use loadmon::model::{build_model, load_checkpoint, Model, ModelConfig};

fn loadmon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_loadmon")).args(args).output().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_series(path: &Path, values: &[f64]) {
    let mut text = String::from("timestamp,watts\n");
    for (i, v) in values.iter().enumerate() {
        text.push_str(&format!("{},{}\n", 1_000_000 + i, v));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn extract_gt_on_kettle_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("kettle.csv");
    let mut v = vec![1200.0; 25];
    v.extend(vec![0.0; 35]);
    write_series(&input, &v);
    let out = dir.path().join("kt.csv");
    let r = loadmon(&["extract-gt", "--input", s(&input), "--load", "KT", "--out", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let rows = read_profile_csv(&out).unwrap();
    assert_eq!(rows.len(), 60);
    assert_eq!(rows.iter().filter(|(_, on)| *on).count(), 25);
    assert!(rows[..25].iter().all(|(_, on)| *on));
    assert!(dir.path().join("kt.manifest.cfg").exists());
}

#[test]
fn extract_gt_on_empty_input_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("empty.csv");
    fs::write(&input, "").unwrap();
    let out = dir.path().join("gt.csv");
    let r = loadmon(&["extract-gt", "--input", s(&input), "--load", "KT", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(2));
    assert!(!out.exists());
}

#[test]
fn unknown_load_and_bad_flags_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("x.csv");
    write_series(&input, &[1.0, 2.0]);
    let out = dir.path().join("gt.csv");
    let r = loadmon(&["extract-gt", "--input", s(&input), "--load", "ZZ", "--out", s(&out)]);
    assert_eq!(r.status.code(), Some(1));
    assert_eq!(loadmon(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(loadmon(&["--help"]).status.code(), Some(0));
}

#[test]
fn synth_then_epochs_zero_then_short_predict_then_eval() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = d.join("house.cfg");
    fs::write(&cfg, "[household]\nduration_s = 14400\n").unwrap();
    let data = d.join("data");
    let r = loadmon(&["synth", "--config", s(&cfg), "--seed", "3", "--out", s(&data)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    for fold in ["train", "val", "eval"] {
        assert!(data.join(fold).join("aggregate.csv").exists());
        assert!(data.join(fold).join("FR.csv").exists());
    }

    // zero epochs: the checkpoint holds the initialization
    let run = d.join("run");
    let r = loadmon(&[
        "train", "--data", s(&data), "--load", "FR", "--preset", "tiny", "--precision", "f64",
        "--seed", "11", "--epochs", "0", "--deterministic", "--quiet", "--out", s(&run),
    ]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let ck = load_checkpoint::<f64>(&run.join("model.ckpt")).unwrap();
    let init: Model<f64> = build_model(&ModelConfig::preset("tiny").unwrap(), 11).unwrap();
    assert_eq!(ck.model.layers, init.layers);
    for f in ["history.csv", "run.cfg", "manifest.cfg"] {
        assert!(run.join(f).exists(), "{f}");
    }

    // input shorter than one window
    let short = d.join("short.csv");
    write_series(&short, &[60.0, 61.0, 150.0, 152.0, 151.0, 60.0, 59.0, 61.0, 60.0, 150.0]);
    let pred = d.join("pred.csv");
    let r = loadmon(&["predict", "--checkpoint", s(&run.join("model.ckpt")), "--input", s(&short), "--out", s(&pred)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let text = fs::read_to_string(&pred).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 10);
    for row in rows {
        let f: Vec<&str> = row.split(',').collect();
        let p: f64 = f[1].parse().unwrap();
        assert!(p > 0.0 && p < 1.0);
        assert_eq!(f[2] == "1", p >= 0.5);
    }

    // evaluation of a prediction against itself is perfect
    let stem = d.join("score");
    let r = loadmon(&["eval", "--pred", s(&pred), "--truth", s(&pred), "--out", s(&stem), "--label", "FR"]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let report = fs::read_to_string(d.join("score.csv")).unwrap();
    assert!(report.starts_with("label,rn,TPA,TPR,B,M,f1,MCC,accuracy"));
    assert!(report.lines().nth(1).unwrap().contains("1.000000"));
}

#[test]
fn eval_counts_hand_table() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let truth = [1, 1, 1, 0, 0, 0, 0, 0, 0, 0];
    let pred = [1, 1, 0, 1, 0, 0, 0, 0, 0, 0];
    let write = |name: &str, v: &[u8]| {
        let mut t = String::from("timestamp,state\n");
        for (i, x) in v.iter().enumerate() {
            t.push_str(&format!("{},{}\n", 100 + i, x));
        }
        fs::write(d.join(name), t).unwrap();
    };
    write("t.csv", &truth);
    write("p.csv", &pred);
    let stem = d.join("r");
    let r = loadmon(&["eval", "--pred", s(&d.join("p.csv")), "--truth", s(&d.join("t.csv")), "--out", s(&stem)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let report = fs::read_to_string(d.join("r.csv")).unwrap();
    let row = report.lines().nth(1).unwrap();
    assert!(row.ends_with(",2,1,1,6"), "{row}");
    assert!(row.contains("0.523810"), "{row}");
}

#[test]
fn sixth_hertz_submeter_is_filled_forward_before_extraction() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("kettle6.csv");
    let mut text = String::from("timestamp,watts\n");
    for (i, w) in [1200.0, 1200.0, 1200.0, 1200.0, 0.0, 0.0, 0.0].iter().enumerate() {
        text.push_str(&format!("{},{}\n", 1_000_000 + 6 * i, w));
    }
    fs::write(&input, text).unwrap();
    let out = dir.path().join("kt.csv");
    let r = loadmon(&["extract-gt", "--input", s(&input), "--load", "KT", "--period", "6", "--out", s(&out)]);
    assert!(r.status.success(), "{}", String::from_utf8_lossy(&r.stderr));
    let rows = read_profile_csv(&out).unwrap();
    assert_eq!(rows.len(), 42);
    assert_eq!(rows[1].0 - rows[0].0, 1.0);
    assert_eq!(rows.iter().filter(|(_, on)| *on).count(), 24);
}
