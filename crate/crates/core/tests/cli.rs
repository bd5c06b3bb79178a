//! End-to-end runs of every `ivm` subcommand through `cli::run`.

use std::fs;
use std::path::Path;

use ivm::io::{encode_pnm, read_ivmh, read_manifest, read_pnm, write_ivmh, write_pnm};
use ivm::{Heatmap, ImageBuffer};

fn run(args: &[&str]) -> (i32, String, String) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = ivm::cli::run(std::iter::once("ivm").chain(args.iter().copied()), &mut out, &mut err) as i32;
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn ok(args: &[&str]) -> String {
    let (code, out, err) = run(args);
    assert_eq!(code, 0, "{args:?}: {err}");
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn value<'a>(out: &'a str, key: &str) -> &'a str {
    out.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
        .unwrap_or_else(|| panic!("no `{key}` in {out}"))
}

fn gradient_image(w: usize, h: usize) -> ImageBuffer {
    ImageBuffer::new(w, h, 3, (0..w * h * 3).map(|i| (i * 7 % 251) as u8).collect()).unwrap()
}

/// Activated on rows 2..=7 and columns 3..=9.
fn block_heatmap(w: usize, h: usize) -> Heatmap {
    let v = (0..w * h)
        .map(|k| {
            let (x, y) = (k % w, k / w);
            if (3..=9).contains(&x) && (2..=7).contains(&y) {
                0.8
            } else {
                0.0
            }
        })
        .collect();
    Heatmap::new(w, h, v).unwrap()
}

#[test]
fn deploy_crops_to_activation() {
    let dir = tempfile::tempdir().unwrap();
    let (img, hm, dst) = (dir.path().join("a.ppm"), dir.path().join("a.ivmh"), dir.path().join("o.ppm"));
    write_pnm(&img, &gradient_image(16, 12)).unwrap();
    write_ivmh(&hm, &block_heatmap(16, 12)).unwrap();
    let out = ok(&["deploy", "--image", p(&img), "--heatmap", p(&hm), "--crop", "--out", p(&dst)]);
    assert_eq!(value(&out, "width"), "7");
    assert_eq!(value(&out, "height"), "6");
    assert_eq!(read_pnm(&dst).unwrap().dims(), (7, 6));
}

#[test]
fn deploy_full_activation_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let (img, hm, dst) = (dir.path().join("a.ppm"), dir.path().join("a.ivmh"), dir.path().join("o.ppm"));
    let image = gradient_image(9, 5);
    write_pnm(&img, &image).unwrap();
    write_ivmh(&hm, &Heatmap::filled(9, 5, 1.0).unwrap()).unwrap();
    for method in ["overlay", "blur", "grayscale"] {
        ok(&["deploy", "--image", p(&img), "--heatmap", p(&hm), "--method", method, "--out", p(&dst)]);
        assert_eq!(fs::read(&dst).unwrap(), encode_pnm(&image), "{method}");
    }
}

#[test]
fn deploy_rejects_bad_arguments() {
    let dir = tempfile::tempdir().unwrap();
    let (img, hm, dst) = (dir.path().join("a.ppm"), dir.path().join("a.ivmh"), dir.path().join("o.ppm"));
    write_pnm(&img, &gradient_image(16, 12)).unwrap();
    write_ivmh(&hm, &block_heatmap(16, 12)).unwrap();
    let base = ["deploy", "--image", p(&img), "--heatmap", p(&hm), "--out", p(&dst)];
    let with = |extra: &[&str]| run(&[&base[..], extra].concat()).0;
    assert_eq!(with(&["--method", "blur", "--sigma", "0"]), 1);
    assert_eq!(with(&["--tau", "1.0"]), 1);
    assert_eq!(with(&["--fill", "zz0000"]), 1);
    write_ivmh(&hm, &Heatmap::zeros(3, 3).unwrap()).unwrap();
    assert_eq!(with(&[]), 2);
    assert_eq!(run(&["deploy", "--image", "/nonexistent.ppm", "--heatmap", p(&hm), "--out", p(&dst)]).0, 2);
}

fn synth(dir: &Path, seed: &str) -> String {
    ok(&[
        "synth", "--out", p(dir), "--n-clean", "2", "--n-noisy", "3", "--corruption", "0.5", "--seed", seed, "--n-test",
        "4",
    ])
}

#[test]
fn synth_writes_requested_counts_deterministically() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let out = synth(a.path(), "3");
    assert_eq!(value(&out, "e_records"), "2");
    assert_eq!(value(&out, "o_records"), "3");
    assert_eq!(value(&out, "test_records"), "4");
    assert_eq!(read_manifest(&a.path().join("e.jsonl")).unwrap().len(), 2);
    let o = read_manifest(&a.path().join("o.jsonl")).unwrap();
    assert_eq!(o.len(), 3);
    for r in &o {
        assert!(a.path().join(&r.image_path).exists());
        let label = read_ivmh(&a.path().join(&r.label_path)).unwrap();
        assert_eq!(label.dims(), (64, 64));
    }
    synth(b.path(), "3");
    for f in ["e.jsonl", "o.jsonl", "test.jsonl"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    for r in &o {
        assert_eq!(fs::read(a.path().join(&r.label_path)).unwrap(), fs::read(b.path().join(&r.label_path)).unwrap());
    }
}

#[test]
fn synth_rejects_bad_rates() {
    let dir = tempfile::tempdir().unwrap();
    let args = |rate: &'static str| {
        run(&["synth", "--out", p(dir.path()), "--n-clean", "1", "--n-noisy", "1", "--corruption", rate, "--seed", "0"]).0
    };
    assert_eq!(args("1.5"), 1);
    assert_eq!(args("-0.1"), 1);
    assert_eq!(run(&["synth", "--out", p(dir.path())]).0, 1);
}

#[test]
fn train_eval_stats_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let model = dir.path().join("model");
    synth(&data, "5");

    let out = ok(&[
        "train", "--data", p(&data), "--seed", "1", "--regime", "dwsl", "--out", p(&model), "--stage1-steps", "0",
        "--stage2-steps", "0",
    ]);
    assert_eq!(value(&out, "regime"), "dwsl");
    assert!(model.join("generator.ivmp").exists());
    assert!(model.join("discriminator.ivmp").exists());
    assert_eq!(fs::read_to_string(model.join("history.csv")).unwrap().lines().count(), 1);

    let out = ok(&[
        "train", "--data", p(&data), "--seed", "1", "--regime", "sl", "--out", p(&model), "--stage2-steps", "3",
        "--batch-size", "4",
    ]);
    assert!(value(&out, "final_loss_stage2").parse::<f64>().unwrap().is_finite());

    let csv = dir.path().join("eval.csv");
    let out = ok(&["eval", "--data", p(&data), "--generator", p(&model.join("generator.ivmp")), "--out", p(&csv)]);
    let iou: f64 = value(&out, "mean_iou").parse().unwrap();
    assert!((0.0..=1.0).contains(&iou));
    let rows = fs::read_to_string(&csv).unwrap();
    assert_eq!(rows.lines().next(), Some("id,iou,weight"));
    assert_eq!(rows.lines().count(), 5);

    let out = ok(&["stats", "--manifest", p(&data.join("e.jsonl")), "--manifest", p(&data.join("o.jsonl"))]);
    assert_eq!(value(&out, "records"), "5");
    let frac: f64 = value(&out, "fraction_below_0.4").parse().unwrap();
    assert!((0.0..=1.0).contains(&frac));
}

#[test]
fn train_reports_bad_config_as_usage() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    synth(&data, "2");
    let cfg = dir.path().join("bad.toml");
    fs::write(&cfg, "lr = -1.0\n").unwrap();
    let args = ["train", "--data", p(&data), "--seed", "0", "--regime", "sl", "--out", p(dir.path()), "--config", p(&cfg)];
    assert_eq!(run(&args).0, 1);
    assert_eq!(run(&["train", "--data", "/nonexistent", "--seed", "0", "--regime", "sl", "--out", p(dir.path())]).0, 2);
}

#[test]
fn fuse_single_input_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, dst) = (dir.path().join("a.ivmh"), dir.path().join("b.ivmh"), dir.path().join("f.ivmh"));
    let hm = block_heatmap(12, 10);
    write_ivmh(&a, &hm).unwrap();
    let stored = read_ivmh(&a).unwrap();
    for method in ["mean", "max", "weighted"] {
        let out = ok(&["fuse", "--input", p(&a), "--method", method, "--out", p(&dst)]);
        assert_eq!(value(&out, "inputs"), "1");
        assert_eq!(read_ivmh(&dst).unwrap(), stored, "{method}");
    }
    write_ivmh(&b, &Heatmap::zeros(12, 10).unwrap()).unwrap();
    let out = ok(&["fuse", "--input", p(&a), "--input", p(&b), "--out", p(&dst)]);
    assert_eq!(value(&out, "inputs"), "2");
    assert_eq!(value(&out, "agreement"), "0.000000");
    let fused = read_ivmh(&dst).unwrap();
    for (f, v) in fused.values().iter().zip(hm.values()) {
        assert!((f - v / 2.0).abs() < 1e-7);
    }
    let weighted = ["fuse", "--input", p(&a), "--input", p(&b), "--method", "weighted", "--out", p(&dst)];
    assert_eq!(run(&[&weighted[..], &["--confidence", "0.5"]].concat()).0, 1);
    ok(&[&weighted[..], &["--confidence", "0.5", "--confidence", "0.5"]].concat());
}

#[test]
fn gradcheck_prints_both_errors() {
    let out = ok(&["gradcheck", "--seed", "3", "--trials", "2", "--hidden", "4"]);
    assert!(value(&out, "max_rel_error_generator").parse::<f64>().unwrap() < 1e-4);
    assert!(value(&out, "max_rel_error_discriminator").parse::<f64>().unwrap() < 1e-4);
}

#[test]
fn help_succeeds_and_unknown_subcommand_fails() {
    assert_eq!(run(&["--help"]).0, 0);
    assert_eq!(run(&["frobnicate"]).0, 1);
}
