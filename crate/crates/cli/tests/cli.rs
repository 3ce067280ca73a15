//! End-to-end tests driving the compiled binary through every subcommand.

use std::path::{Path, PathBuf};
use std::process::Output;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vhs2hdtv_core::data::{Frame, ValueRange};
use vhs2hdtv_core::models::ModelConfig;
use vhs2hdtv_core::tensor::Tensor;
use vhs2hdtv_core::trainer::{TrainConfig, Trainer};

fn vhs2hdtv(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_vhs2hdtv"))
        .args(args)
        .output()
        .expect("binary launches")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn assert_ok(out: &Output) {
    assert!(
        out.status.success(),
        "expected success\nstdout: {}\nstderr: {}",
        stdout(out),
        stderr(out)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn path_str(p: &Path) -> &str {
    p.to_str().expect("utf-8 test paths")
}

/// Fill `dir` with deterministic noise PNGs under the given names.
fn noise_dir(dir: &Path, names: &[&str], h: usize, w: usize, seed: u64) {
    std::fs::create_dir_all(dir).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for name in names {
        let px: Vec<f64> = (0..h * w * 3).map(|_| rng.gen::<f64>()).collect();
        Frame::from_pixels(
            Tensor::new(&[h, w, 3], px),
            ValueRange::Unit,
            (*name).to_string(),
        )
        .unwrap()
        .save_png(&dir.join(name))
        .unwrap();
    }
}

fn frame_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("frame_{:03}.png", i)).collect()
}

fn fill_domain(dir: &Path, n: usize, seed: u64) {
    let names = frame_names(n);
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    noise_dir(dir, &refs, 24, 24, seed);
}

/// Prepare a manifest over two tiny noise domains; everything lands in the
/// train split so short runs never starve.
fn tiny_manifest(root: &Path) -> PathBuf {
    let x = root.join("x");
    let y = root.join("y");
    fill_domain(&x, 4, 11);
    fill_domain(&y, 4, 22);
    let manifest = root.join("manifest.json");
    let out = vhs2hdtv(&[
        "prepare",
        "--x-dir",
        path_str(&x),
        "--y-dir",
        path_str(&y),
        "--out",
        path_str(&manifest),
        "--train-frac",
        "1.0",
    ]);
    assert_ok(&out);
    manifest
}

fn tiny_train_config(root: &Path) -> PathBuf {
    let path = root.join("train_config.json");
    std::fs::write(
        &path,
        concat!(
            "{\n",
            "  \"seed\": 7,\n",
            "  \"model\": {\"depth\": 2, \"base_channels\": 4, \"max_channels\": 8,",
            " \"feature_tap\": \"identity\"},\n",
            "  \"crop\": 16,\n",
            "  \"batch_size\": 1,\n",
            "  \"res_steps_per_cycle_step\": 1,\n",
            "  \"cycles\": 2,\n",
            "  \"checkpoint_every\": 1\n",
            "}\n"
        ),
    )
    .unwrap();
    path
}

#[test]
fn prepare_reports_counts_and_reruns_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let x = tmp.path().join("x");
    let y = tmp.path().join("y");
    fill_domain(&x, 20, 1);
    fill_domain(&y, 20, 2);
    let manifest = tmp.path().join("manifest.json");
    let args = [
        "prepare",
        "--x-dir",
        path_str(&x),
        "--y-dir",
        path_str(&y),
        "--out",
        path_str(&manifest),
    ];
    let out = vhs2hdtv(&args);
    assert_ok(&out);
    let text = stdout(&out);
    assert!(text.contains("domain X: 19 train / 1 test"), "{}", text);
    assert!(text.contains("domain Y: 19 train / 1 test"), "{}", text);
    assert!(text.contains("manifest written"), "{}", text);

    let first = std::fs::read(&manifest).unwrap();
    assert_ok(&vhs2hdtv(&args));
    assert_eq!(first, std::fs::read(&manifest).unwrap());
}

#[test]
fn prepare_with_a_missing_source_names_the_flag() {
    let tmp = tempfile::tempdir().unwrap();
    let y = tmp.path().join("y");
    fill_domain(&y, 2, 3);
    let out = vhs2hdtv(&[
        "prepare",
        "--x-dir",
        path_str(&tmp.path().join("nope")),
        "--y-dir",
        path_str(&y),
        "--out",
        path_str(&tmp.path().join("m.json")),
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("--x-dir"), "{}", stderr(&out));
}

#[test]
fn train_writes_run_artifacts_and_logs_deterministically() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tiny_manifest(tmp.path());
    let config = tiny_train_config(tmp.path());

    let run = |dir: &Path| {
        let out = vhs2hdtv(&[
            "train",
            "--manifest",
            path_str(&manifest),
            "--config",
            path_str(&config),
            "--run-dir",
            path_str(dir),
        ]);
        assert_ok(&out);
        out
    };
    let run1 = tmp.path().join("run1");
    let out = run(&run1);
    assert!(stdout(&out).contains("final checkpoint"), "{}", stdout(&out));

    assert!(run1.join("config.json").is_file());
    assert!(run1.join("ckpt_000002.safetensors").is_file());
    let latest = std::fs::read_to_string(run1.join("latest")).unwrap();
    assert_eq!(latest.trim(), "ckpt_000002.safetensors");
    let log = std::fs::read_to_string(run1.join("log.jsonl")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 2);
    for line in &lines {
        let v: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(v["total_g"].as_f64().unwrap().is_finite());
    }

    let run2 = tmp.path().join("run2");
    run(&run2);
    assert_eq!(log, std::fs::read_to_string(run2.join("log.jsonl")).unwrap());
}

#[test]
fn train_resume_matches_an_uninterrupted_run() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tiny_manifest(tmp.path());
    let config = tiny_train_config(tmp.path());
    let run_a = tmp.path().join("run_a");
    let run_b = tmp.path().join("run_b");

    assert_ok(&vhs2hdtv(&[
        "train",
        "--manifest",
        path_str(&manifest),
        "--config",
        path_str(&config),
        "--run-dir",
        path_str(&run_a),
        "--cycles",
        "4",
    ]));
    assert_ok(&vhs2hdtv(&[
        "train",
        "--manifest",
        path_str(&manifest),
        "--config",
        path_str(&config),
        "--run-dir",
        path_str(&run_b),
        "--cycles",
        "2",
    ]));
    assert_ok(&vhs2hdtv(&[
        "train",
        "--manifest",
        path_str(&manifest),
        "--run-dir",
        path_str(&run_b),
        "--resume",
        "--cycles",
        "2",
    ]));

    let ckpt = "ckpt_000004.safetensors";
    assert_eq!(
        std::fs::read(run_a.join(ckpt)).unwrap(),
        std::fs::read(run_b.join(ckpt)).unwrap(),
        "resumed parameters and optimizer state must match the straight run"
    );
    assert_eq!(
        std::fs::read(run_a.join("log.jsonl")).unwrap(),
        std::fs::read(run_b.join("log.jsonl")).unwrap()
    );
}

#[test]
fn train_override_echoes_config_and_disables_the_resolution_branch() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tiny_manifest(tmp.path());
    let config = tiny_train_config(tmp.path());
    let run_dir = tmp.path().join("run");
    assert_ok(&vhs2hdtv(&[
        "train",
        "--manifest",
        path_str(&manifest),
        "--config",
        path_str(&config),
        "--run-dir",
        path_str(&run_dir),
        "--override",
        "res_steps_per_cycle_step=0",
        "--cycles",
        "1",
    ]));

    // The effective config lands in the run directory with the override.
    let echoed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("config.json")).unwrap())
            .unwrap();
    assert_eq!(echoed["res_steps_per_cycle_step"], 0);

    // Without resolution steps the enhancement losses never move.
    let log = std::fs::read_to_string(run_dir.join("log.jsonl")).unwrap();
    let report: serde_json::Value = serde_json::from_str(log.lines().next().unwrap()).unwrap();
    assert_eq!(report["gan_g_z"].as_f64().unwrap(), 0.0);
    assert_eq!(report["perc"].as_f64().unwrap(), 0.0);
    assert!(report["cyc"].as_f64().unwrap() > 0.0);
}

#[test]
fn train_rejects_an_unknown_override_key_as_usage() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = tiny_manifest(tmp.path());
    let run_dir = tmp.path().join("run");
    let out = vhs2hdtv(&[
        "train",
        "--manifest",
        path_str(&manifest),
        "--run-dir",
        path_str(&run_dir),
        "--override",
        "learning_rate=0.1",
    ]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("learning_rate"), "{}", stderr(&out));
}

/// Run directory with a zeroed generator: with the residual bypass the
/// network computes clamp(x + 0), i.e. the identity.
fn zeroed_run_dir(root: &Path) -> PathBuf {
    let run_dir = root.join("run");
    let cfg = TrainConfig {
        model: ModelConfig {
            depth: 2,
            base_channels: 4,
            max_channels: 8,
            feature_tap: "identity".into(),
            ..ModelConfig::default()
        },
        crop: 16,
        ..TrainConfig::default()
    };
    let trainer = Trainer::new(cfg.clone()).unwrap();
    for p in trainer.models.g.params() {
        p.set_value(Tensor::zeros(&p.shape()));
    }
    trainer.save_checkpoint(&run_dir).unwrap();
    let mut cfg_json = serde_json::to_string_pretty(&cfg).unwrap();
    cfg_json.push('\n');
    std::fs::write(run_dir.join("config.json"), cfg_json).unwrap();
    run_dir
}

#[test]
fn translate_identity_bypass_reproduces_inputs_bit_for_bit() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = zeroed_run_dir(tmp.path());
    let input = tmp.path().join("frames");
    let names = frame_names(5);
    let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
    // Dimensions off the 2^depth grid, so the reflect pad + crop runs.
    noise_dir(&input, &refs, 18, 21, 44);

    let translate = |out_dir: &Path| {
        let out = vhs2hdtv(&[
            "translate",
            "--run-dir",
            path_str(&run_dir),
            "--input",
            path_str(&input),
            "--out",
            path_str(out_dir),
            "--override",
            "model.residual_bypass=true",
        ]);
        assert_ok(&out);
        out
    };
    let out1 = tmp.path().join("out1");
    let out = translate(&out1);
    assert!(stdout(&out).contains("translated 5 frame(s)"), "{}", stdout(&out));

    for name in &names {
        assert_eq!(
            std::fs::read(input.join(name)).unwrap(),
            std::fs::read(out1.join(name)).unwrap(),
            "{} should pass through the zeroed bypass generator untouched",
            name
        );
    }

    // Idempotence: a second run writes the same bytes.
    let out2 = tmp.path().join("out2");
    translate(&out2);
    for name in &names {
        assert_eq!(
            std::fs::read(out1.join(name)).unwrap(),
            std::fs::read(out2.join(name)).unwrap()
        );
    }
}

#[test]
fn translate_tiled_blending_preserves_the_identity() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = zeroed_run_dir(tmp.path());
    let input = tmp.path().join("frames");
    noise_dir(&input, &["big.png"], 70, 90, 9);
    let out_dir = tmp.path().join("out");
    let out = vhs2hdtv(&[
        "translate",
        "--run-dir",
        path_str(&run_dir),
        "--input",
        path_str(&input),
        "--out",
        path_str(&out_dir),
        "--tile",
        "36",
        "--override",
        "model.residual_bypass=true",
    ]);
    assert_ok(&out);
    assert_eq!(
        std::fs::read(input.join("big.png")).unwrap(),
        std::fs::read(out_dir.join("big.png")).unwrap(),
        "feathered tile blending must reduce to the identity on identical tiles"
    );
}

#[test]
fn translate_rejects_a_checkpoint_from_another_architecture() {
    let tmp = tempfile::tempdir().unwrap();
    let run_dir = zeroed_run_dir(tmp.path());

    // A checkpoint with different channel widths cannot load.
    let other_cfg = TrainConfig {
        model: ModelConfig {
            depth: 2,
            base_channels: 6,
            max_channels: 12,
            feature_tap: "identity".into(),
            ..ModelConfig::default()
        },
        crop: 16,
        ..TrainConfig::default()
    };
    let other_dir = tmp.path().join("other");
    let ckpt = Trainer::new(other_cfg)
        .unwrap()
        .save_checkpoint(&other_dir)
        .unwrap();

    let input = tmp.path().join("frames");
    noise_dir(&input, &["a.png"], 18, 21, 5);
    let out = vhs2hdtv(&[
        "translate",
        "--run-dir",
        path_str(&run_dir),
        "--checkpoint",
        path_str(&ckpt),
        "--input",
        path_str(&input),
        "--out",
        path_str(&tmp.path().join("out")),
    ]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("incompatible"), "{}", stderr(&out));
}

fn toy_model_file(root: &Path) -> PathBuf {
    let mut text = String::from("svr_rbf v1\ngamma 0.05\nrho -10\nscale -1 1\n");
    for i in 0..36 {
        text.push_str(&format!("range {} -5 5\n", i));
    }
    text.push_str("sv 1.0");
    text.push_str(&" 0".repeat(36));
    text.push('\n');
    let path = root.join("model.svr");
    std::fs::write(&path, text).unwrap();
    path
}

#[test]
fn evaluate_scores_directories_and_compares_methods() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("noisy");
    let b = tmp.path().join("clean");
    noise_dir(&a, &["f1.png", "f2.png", "f3.png"], 64, 64, 31);
    noise_dir(&b, &["f1.png", "f2.png", "f3.png"], 64, 64, 32);
    let model = toy_model_file(tmp.path());
    let report_dir = tmp.path().join("report");
    let out = vhs2hdtv(&[
        "evaluate",
        "--dir",
        path_str(&a),
        "--dir",
        path_str(&b),
        "--out",
        path_str(&report_dir),
        "--model",
        path_str(&model),
    ]);
    assert_ok(&out);
    let text = stdout(&out);
    assert!(text.contains("lower is better"), "{}", text);
    assert!(text.contains("noisy"), "{}", text);
    assert!(text.contains("clean"), "{}", text);

    let csv = std::fs::read_to_string(report_dir.join("noisy.csv")).unwrap();
    assert!(csv.starts_with("path,brisque,piqe,error\n"), "{}", csv);
    assert_eq!(csv.lines().count(), 4);
    assert!(report_dir.join("noisy.json").is_file());
    assert!(report_dir.join("clean.csv").is_file());

    let comparison = std::fs::read_to_string(report_dir.join("comparison.csv")).unwrap();
    assert!(
        comparison.starts_with("method,mean_brisque,mean_piqe\n"),
        "{}",
        comparison
    );
    assert_eq!(comparison.lines().count(), 3);
}

#[test]
fn evaluate_piqe_metric_hides_the_regression_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("frames");
    noise_dir(&a, &["f1.png", "f2.png"], 64, 64, 8);
    let report_dir = tmp.path().join("report");
    // The alternate spelling of the metric is accepted.
    let out = vhs2hdtv(&[
        "evaluate",
        "--dir",
        path_str(&a),
        "--out",
        path_str(&report_dir),
        "--metric",
        "pique",
    ]);
    assert_ok(&out);
    assert!(!stdout(&out).contains("notice"), "{}", stdout(&out));

    let csv = std::fs::read_to_string(report_dir.join("frames.csv")).unwrap();
    assert!(csv.starts_with("path,piqe,error\n"), "{}", csv);
    assert!(!csv.contains("brisque"));
    let comparison = std::fs::read_to_string(report_dir.join("comparison.csv")).unwrap();
    assert!(comparison.starts_with("method,mean_piqe\n"), "{}", comparison);
}

#[test]
fn evaluate_without_a_model_falls_back_to_feature_export() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("frames");
    noise_dir(&a, &["f1.png", "f2.png"], 64, 64, 12);
    let report_dir = tmp.path().join("report");
    let out = vhs2hdtv(&[
        "evaluate",
        "--dir",
        path_str(&a),
        "--out",
        path_str(&report_dir),
        "--metric",
        "brisque",
    ]);
    assert_ok(&out);
    assert!(stdout(&out).contains("notice"), "{}", stdout(&out));

    let csv = std::fs::read_to_string(report_dir.join("frames_features.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("path,f00,f01,"), "{}", header);
    assert!(header.ends_with("f35,error"), "{}", header);
    assert_eq!(csv.lines().count(), 3);
    // No scores were computed, so there is nothing to compare.
    assert!(!report_dir.join("frames.csv").exists());
    assert!(!report_dir.join("comparison.csv").exists());
}

#[test]
fn grid_renders_one_labeled_montage_per_shared_name() {
    let tmp = tempfile::tempdir().unwrap();
    let m1 = tmp.path().join("input");
    let m2 = tmp.path().join("ours");
    let names = ["a.png", "b.png", "c.png"];
    noise_dir(&m1, &names, 24, 32, 61);
    noise_dir(&m2, &names, 24, 32, 62);
    let out_dir = tmp.path().join("grid");
    let out = vhs2hdtv(&[
        "grid",
        "--dir",
        path_str(&m1),
        "--dir",
        path_str(&m2),
        "--out",
        path_str(&out_dir),
    ]);
    assert_ok(&out);
    assert!(stdout(&out).contains("3 montage(s)"), "{}", stdout(&out));
    for name in names {
        let montage = Frame::load_png(&out_dir.join(name)).unwrap();
        // Two 32-wide panels + an 8 px gutter, plus the label banner.
        assert_eq!(montage.width(), 72);
        assert_eq!(montage.height(), 24 + 22);
    }
}

#[test]
fn grid_with_one_directory_passes_frames_through_under_a_banner() {
    let tmp = tempfile::tempdir().unwrap();
    let m1 = tmp.path().join("only");
    noise_dir(&m1, &["a.png"], 24, 32, 13);
    let out_dir = tmp.path().join("grid");
    assert_ok(&vhs2hdtv(&[
        "grid",
        "--dir",
        path_str(&m1),
        "--out",
        path_str(&out_dir),
    ]));
    let source = Frame::load_png(&m1.join("a.png")).unwrap();
    let montage = Frame::load_png(&out_dir.join("a.png")).unwrap();
    assert_eq!(montage.width(), 32);
    assert_eq!(montage.height(), 24 + 22);
    let banner = 22 * 32 * 3;
    assert_eq!(
        &montage.pixels().data()[banner..],
        source.pixels().data(),
        "panel pixels below the banner must be untouched"
    );
}

#[test]
fn grid_rejects_mismatched_names_listing_the_difference() {
    let tmp = tempfile::tempdir().unwrap();
    let m1 = tmp.path().join("m1");
    let m2 = tmp.path().join("m2");
    noise_dir(&m1, &["a.png", "b.png"], 24, 32, 71);
    noise_dir(&m2, &["a.png", "c.png"], 24, 32, 72);
    let out = vhs2hdtv(&[
        "grid",
        "--dir",
        path_str(&m1),
        "--dir",
        path_str(&m2),
        "--out",
        path_str(&tmp.path().join("grid")),
    ]);
    assert_eq!(code(&out), 1);
    let err = stderr(&out);
    assert!(err.contains("c.png"), "{}", err);
    assert!(err.contains("b.png"), "{}", err);
}

#[test]
fn usage_errors_and_help_use_the_documented_exit_codes() {
    let out = vhs2hdtv(&["--definitely-not-a-flag"]);
    assert_eq!(code(&out), 1);

    let out = vhs2hdtv(&[]);
    assert_eq!(code(&out), 1, "a missing subcommand is a usage error");

    let out = vhs2hdtv(&["--help"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("prepare"));

    let out = vhs2hdtv(&["train", "--help"]);
    assert_eq!(code(&out), 0);
    for flag in ["--manifest", "--run-dir", "--preset", "--override", "--resume"] {
        assert!(stdout(&out).contains(flag), "{}", stdout(&out));
    }
}
