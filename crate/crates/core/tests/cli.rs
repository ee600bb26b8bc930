mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use chromabrush::cli::{parse_args, Command as Sub};
use chromabrush::convnet::{random_weights, save_weights, NetworkTopology, PoolMode};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_chromabrush"));
    c.env_remove("CHROMABRUSH_WEIGHTS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Randomly initialized VGG-19 weights, written once per test binary.
fn vgg_file() -> &'static Path {
    static FILE: OnceLock<(tempfile::TempDir, PathBuf)> = OnceLock::new();
    let (_, p) = FILE.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vgg19.vggw");
        let topo = NetworkTopology::vgg19(PoolMode::Avg);
        save_weights(&path, &random_weights(&topo, 0), &topo).unwrap();
        (dir, path)
    });
    p
}

#[test]
fn parse_defaults_and_passthrough() {
    let inv = parse_args(["chromabrush", "colorize", "--content", "c.png", "--style", "s.png", "--out", "o.png"]).unwrap();
    let Sub::Colorize(a) = inv.command else { panic!() };
    let c = a.to_config(None);
    assert_eq!((c.iterations, c.decay_per_iter), (1000, 0.0025));
    assert_eq!(c.optimizer.to_string(), "lbfgs");

    let inv = parse_args(["chromabrush", "compare", "--seed", "7", "--content", "c", "--style", "s", "--out", "o"]).unwrap();
    let Sub::Compare(a) = inv.command else { panic!() };
    assert_eq!(a.to_config(None).seed, 7);
}

#[test]
fn usage_errors_exit_1() {
    let o = run(&["colorize"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--content"));
    assert_eq!(run(&["colorize", "--content", "c", "--style", "s", "--out", "o", "--frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
}

#[test]
fn dry_run_echoes_every_field() {
    let o = run(&[
        "colorize", "--content", "c.png", "--style", "s.png", "--out", "o.png", "--iters", "12", "--alpha", "2",
        "--beta", "40", "--decay", "0.01", "--optimizer", "sgd", "--pooling", "max", "--init", "content", "--seed",
        "9", "--max-side", "64", "--sgd-lr", "0.5", "--weights", "w.bin", "--dry-run",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let err = stderr(&o);
    for line in [
        "content_path = c.png",
        "style_path = s.png",
        "output_path = o.png",
        "weights_path = w.bin",
        "iterations = 12",
        "alpha = 2",
        "beta0 = 40",
        "decay_per_iter = 0.01",
        "optimizer = sgd",
        "pooling = max",
        "init = content",
        "seed = 9",
        "max_side = 64",
        "sgd_lr = 0.5",
    ] {
        assert!(err.lines().any(|l| l == line), "missing `{line}` in\n{err}");
    }
}

#[test]
fn weights_env_fallback() {
    let o = bin()
        .args(["colorize", "--content", "c", "--style", "s", "--out", "o", "--dry-run"])
        .env("CHROMABRUSH_WEIGHTS", "/from/env.vggw")
        .output()
        .unwrap();
    assert!(stderr(&o).contains("weights_path = /from/env.vggw"));
}

#[test]
fn missing_weight_file_exits_2_naming_path() {
    let dir = tempfile::tempdir().unwrap();
    let (c, s) = common::write_pair(dir.path(), 32, 0);
    let w = dir.path().join("absent.vggw");
    let o = run(&[
        "colorize", "--content", c.to_str().unwrap(), "--style", s.to_str().unwrap(), "--out",
        dir.path().join("o.png").to_str().unwrap(), "--weights", w.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(w.to_str().unwrap()), "{}", stderr(&o));

    let o = run(&["colorize", "--content", "c", "--style", "s", "--out", "o"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("CHROMABRUSH_WEIGHTS"));
}

#[test]
fn check_weights_inventory() {
    let o = run(&["check-weights", "--weights", vgg_file().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let rows: Vec<&str> = out.lines().filter(|l| l.starts_with("conv")).collect();
    assert_eq!(rows.len(), 16);
    assert!(rows[0].starts_with("conv1_1") && rows[0].contains("[64, 3, 3, 3]"));
    assert!(rows[15].starts_with("conv5_4") && rows[15].contains("[512, 512, 3, 3]"));
    assert!(out.contains("16 layers ok"));
}

#[test]
fn check_weights_reports_damage() {
    let dir = tempfile::tempdir().unwrap();
    let bytes = std::fs::read(vgg_file()).unwrap();

    let cut = dir.path().join("cut.vggw");
    std::fs::write(&cut, &bytes[..1000]).unwrap();
    let o = run(&["check-weights", "--weights", cut.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("truncated at byte offset") && err.contains("conv1_1"), "{err}");

    let mut v2 = bytes[..64].to_vec();
    v2[4..8].copy_from_slice(&2u32.to_le_bytes());
    let bad = dir.path().join("v2.vggw");
    std::fs::write(&bad, &v2).unwrap();
    let o = run(&["check-weights", "--weights", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("unsupported version 2"), "{}", stderr(&o));
}

#[test]
fn colorize_end_to_end_with_vgg19() {
    let dir = tempfile::tempdir().unwrap();
    let (c, s) = common::write_pair(dir.path(), 32, 1);
    let out = dir.path().join("result.png");
    let o = run(&[
        "colorize", "--content", c.to_str().unwrap(), "--style", s.to_str().unwrap(), "--out",
        out.to_str().unwrap(), "--weights", vgg_file().to_str().unwrap(), "--iters", "2", "--max-side", "32",
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(out.exists());
    assert!(dir.path().join("result.trace.csv").exists());
    let err = stderr(&o);
    assert!(err.contains("content_layer = conv4_2"));
    assert!(err.lines().any(|l| l.starts_with("iter     0")), "{err}");
}
