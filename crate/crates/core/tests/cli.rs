use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use freqgan::container::load_image_set;
use freqgan::trainer::METRICS_HEADER;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SMALL_CONFIG: &str = r#"{
  "batch_size": 8,
  "critics": 2,
  "iterations": 4,
  "eval_every": 2,
  "eval_samples": 16,
  "arch": { "latent_dim": 4, "base_channels": 2 },
  "dataset": { "count": 40 }
}
"#;

fn freqgan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_freqgan"))
        .args(args)
        .env_remove("FREQGAN_SEED")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = freqgan(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_pngs(dir: &Path, n: usize, seed: u64) {
    std::fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..n {
        let buf: Vec<u8> = (0..16 * 16 * 3).map(|_| rng.random()).collect();
        image::RgbImage::from_raw(16, 16, buf)
            .unwrap()
            .save(dir.join(format!("img{k}.png")))
            .unwrap();
    }
}

fn write_config(dir: &Path) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, SMALL_CONFIG).unwrap();
    p
}

fn manifests_in(dir: &Path) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name() == "manifest.json")
        .count()
}

#[test]
fn identity_filter_round_trips_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    write_pngs(&input, 3, 1);
    let out = tmp.path().join("out");
    ok(&["filter", "--input", s(&input), "--out", s(&out), "--gamma", "1.0,0.5"]);
    for k in 0..3 {
        let a = image::open(input.join(format!("img{k}.png"))).unwrap().to_rgb8();
        let b = image::open(out.join("gamma_1").join(format!("img{k}.png"))).unwrap().to_rgb8();
        assert!(a.as_raw().iter().zip(b.as_raw()).all(|(x, y)| x.abs_diff(*y) <= 1));
        assert!(out.join("gamma_0.5").join(format!("img{k}_spectrum.pgm")).exists());
    }
    assert_eq!(manifests_in(&out), 1);
}

#[test]
fn gap_of_a_directory_with_itself_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    write_pngs(&input, 4, 2);
    let out = tmp.path().join("gap");
    let text = ok(&["gap", "--real", s(&input), "--fake", s(&input), "--lower-band", "--out", s(&out)]);
    let report: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["all_band_gap"], 0.0);
    assert_eq!(report["lower_band_gap"], 0.0);
    let saved: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("gap.json")).unwrap()).unwrap();
    assert_eq!(saved, report);
}

#[test]
fn training_logs_are_byte_identical_and_gaps_reproduce() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&["train", "--config", s(&cfg), "--out", s(&a), "--no-wall-time"]);
    ok(&["train", "--config", s(&cfg), "--out", s(&b), "--no-wall-time"]);
    let csv = std::fs::read(a.join("metrics.csv")).unwrap();
    assert_eq!(csv, std::fs::read(b.join("metrics.csv")).unwrap());

    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some(METRICS_HEADER));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.len() == 7 && r[6] == "0"));
    assert_eq!(rows[0][0], "2");
    assert_eq!(rows[1][0], "4");
    assert_eq!(manifests_in(&a), 1);
    for f in ["final.ckpt", "best.ckpt", "checkpoint_000002.ckpt", "config.json", "dataset.json"] {
        assert!(a.join(f).exists(), "{f}");
    }

    // sample the final model with the evaluation seed and size, then measure
    let samples = tmp.path().join("samples");
    ok(&[
        "sample", "--checkpoint", s(&a.join("final.ckpt")), "--n", "16", "--seed", "7", "--out", s(&samples),
    ]);
    assert!(samples.join("grid.png").exists());
    assert_eq!(load_image_set(&samples.join("samples.fgimg")).unwrap().shape(), &[16, 3, 16, 16]);
    let report: serde_json::Value = serde_json::from_str(&ok(&[
        "gap",
        "--real",
        s(&a.join("dataset.json")),
        "--fake",
        s(&samples.join("samples.fgimg")),
        "--lower-band",
    ]))
    .unwrap();
    let logged: f64 = rows[1][4].parse().unwrap();
    let lower: f64 = rows[1][5].parse().unwrap();
    assert!((report["all_band_gap"].as_f64().unwrap() - logged).abs() < 1e-9);
    assert!((report["lower_band_gap"].as_f64().unwrap() - lower).abs() < 1e-9);
}

#[test]
fn seed_comes_from_the_environment_unless_given() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    ok(&["train", "--config", s(&cfg), "--out", s(&a), "--no-wall-time", "--seed", "5", "--iterations", "2"]);
    let env = Command::new(env!("CARGO_BIN_EXE_freqgan"))
        .args(["train", "--config", s(&cfg), "--out", s(&b), "--no-wall-time", "--iterations", "2"])
        .env("FREQGAN_SEED", "5")
        .output()
        .unwrap();
    assert!(env.status.success());
    ok(&["train", "--config", s(&cfg), "--out", s(&c), "--no-wall-time", "--iterations", "2"]);
    let read = |d: &Path| std::fs::read(d.join("metrics.csv")).unwrap();
    assert_eq!(read(&a), read(&b));
    assert_ne!(read(&a), read(&c));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(freqgan(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(freqgan(&["gap", "--real", "x", "--fake", "y", "--bogus"]).status.code(), Some(2));

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"gamma\": 0.5,\n  \"gammma\": 0.7\n}\n").unwrap();
    let out = freqgan(&["train", "--config", s(&bad), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("bad.json:3:") && err.contains("gammma"), "{err}");

    let invalid = tmp.path().join("invalid.json");
    std::fs::write(&invalid, "{ \"gamma\": 1.5 }").unwrap();
    let out = freqgan(&["train", "--config", s(&invalid), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(3));

    let missing = tmp.path().join("nowhere");
    let out = freqgan(&["gap", "--real", s(&missing), "--fake", s(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn analysis_commands_on_synthetic_data() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path());
    let run = tmp.path().join("run");
    ok(&["train", "--config", s(&cfg), "--out", s(&run), "--iterations", "2", "--eval-every", "1"]);
    let data = run.join("dataset.json");
    let samples = tmp.path().join("samples");
    ok(&["sample", "--checkpoint", s(&run.join("final.ckpt")), "--n", "40", "--out", s(&samples)]);
    let fake = samples.join("samples.fgimg");

    let attack = tmp.path().join("attack");
    ok(&[
        "attack",
        "--checkpoint", s(&run.join("checkpoint_000001.ckpt")),
        "--checkpoint", s(&run.join("final.ckpt")),
        "--input", s(&data),
        "--limit", "4",
        "--out", s(&attack),
    ]);
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(attack.join("sfa.json")).unwrap()).unwrap();
    assert_eq!(summary.as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(attack.join("sfa_1_final.csv")).unwrap();
    assert_eq!(csv.lines().count(), 16);
    assert!(csv.lines().all(|l| l.split(',').count() == 16));

    let spectrum = tmp.path().join("spectrum");
    ok(&["spectrum", "--input", s(&data), "--input", s(&fake), "--out", s(&spectrum)]);
    assert!(spectrum.join("spectrum_1.pgm").exists());

    let detect = tmp.path().join("detect");
    let text = ok(&["detect", "--real", s(&data), "--fake", s(&fake), "--epochs", "5", "--out", s(&detect)]);
    let results: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(results.as_array().unwrap().len(), 2);

    let sweep = tmp.path().join("sweep");
    ok(&[
        "sweep", "--config", s(&cfg), "--out", s(&sweep), "--gammas", "0.6,0.8", "--lambdas", "0.01",
        "--iterations", "2", "--no-wall-time",
    ]);
    let table = std::fs::read_to_string(sweep.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
    for d in [&attack, &spectrum, &detect, &sweep, &samples, &sweep.join("gamma0.6_lambda0.01")] {
        assert_eq!(manifests_in(d), 1, "{}", d.display());
    }
}
