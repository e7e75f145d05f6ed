use std::path::Path;
use std::process::{Command, Output};

use envgen::env::Environment;
use envgen::validate::{validate, Constraints};

fn envgen(out_dir: &Path, args: &[&str]) -> Output {
    let out = Command::new(env!("CARGO_BIN_EXE_envgen"))
        .args(args)
        .env("ENVGEN_OUT_DIR", out_dir)
        .env("ENVGEN_WORKERS", "1")
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "envgen {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL_WAREHOUSE: &str = "warehouse-even 9 5
.........
w.e@e...w
.........
....e@e..
w.......w
";

#[test]
fn train_select_generate_render_round() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = envgen(d, &["train", "--preset", "mini", "--run", "r", "--evals", "20", "--seed", "3"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("best f_res"));
    let run = d.join("r");
    for f in ["result_archive.csv", "optimizer.json", "manifest.json", "config.toml", "best_generator.json"] {
        assert!(run.join(f).exists(), "{f}");
    }

    let archive = run.join("result_archive.csv");
    let config = run.join("config.toml");
    envgen(d, &["select", "--archive", s(&archive), "--config", s(&config), "--out", "picked.json"]);
    assert!(d.join("picked.json").exists());

    let picked = d.join("picked.json");
    envgen(d, &["generate", "--generator", s(&picked), "--size", "28x24", "--shelves", "96", "--out", "big.txt"]);
    let big = Environment::read(&d.join("big.txt")).unwrap();
    assert_eq!((big.width(), big.height()), (28, 24));
    assert!(validate(&big, &Constraints::with_shelves(96)).is_valid);

    envgen(d, &["render", "--archive", s(&archive), "--config", s(&config), "--px", "2", "--out", "archive.png"]);
    let img = image::open(d.join("archive.png")).unwrap();
    assert_eq!((img.width(), img.height()), (50, 40));
}

#[test]
fn repair_simulate_and_render_usage() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let raw = d.join("raw.txt");
    std::fs::write(&raw, SMALL_WAREHOUSE.replace("w.e@e...w", "w.@@@...w")).unwrap();
    let out = envgen(d, &["repair", "--env", s(&raw), "--shelves", "2", "--out", "fixed.txt"]);
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(report.is_object());
    let fixed = d.join("fixed.txt");
    let env = Environment::read(&fixed).unwrap();
    assert!(validate(&env, &Constraints::with_shelves(2)).is_valid);

    envgen(
        d,
        &[
            "simulate", "--env", s(&fixed), "--agents", "3", "--horizon", "40", "--out", "sim.json", "--usage-png",
            "usage.png", "--usage-csv", "usage.csv",
        ],
    );
    let sim: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(d.join("sim.json")).unwrap()).unwrap();
    assert!(sim["throughput"].as_f64().unwrap() >= 0.0);
    let rows = std::fs::read_to_string(d.join("usage.csv")).unwrap();
    assert_eq!(rows.lines().count(), env.height());
    assert!(d.join("usage.png").exists());

    let sim_path = d.join("sim.json");
    envgen(d, &["render", "--usage", s(&sim_path), "--grid-env", s(&fixed), "--px", "1", "--out", "u2.png"]);
    let img = image::open(d.join("u2.png")).unwrap();
    assert_eq!((img.width(), img.height()), (9, 5));

    envgen(d, &["render", "--env", s(&fixed), "--px", "3", "--out", "env.png"]);
    let img = image::open(d.join("env.png")).unwrap();
    assert_eq!((img.width(), img.height()), (27, 15));
}

#[test]
fn tile_baseline_writes_valid_environment() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let src = d.join("src.txt");
    std::fs::write(&src, SMALL_WAREHOUSE).unwrap();
    envgen(d, &["tile-baseline", "--env", s(&src), "--size", "14x10", "--shelves", "8", "--out", "tiled.txt"]);
    let env = Environment::read(&d.join("tiled.txt")).unwrap();
    assert_eq!((env.width(), env.height()), (14, 10));
    assert!(validate(&env, &Constraints::with_shelves(8)).is_valid);
}

#[test]
fn bad_input_exits_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_envgen"))
        .args(["train", "--preset", "no-such-preset"])
        .env("ENVGEN_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown preset"));
}
