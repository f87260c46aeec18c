//! Drive the compiled binary through every subcommand on a tiny config.

use std::fs;
use std::path::Path;
use std::process::Command;

fn clab() -> Command {
    Command::new(env!("CARGO_BIN_EXE_clab"))
}

fn write_tiny_config(path: &Path) {
    let config = serde_json::json!({
        "synth": {
            "d": 6,
            "l": 4,
            "num_tasks": 8,
            "regime": "same",
            "perturb_dims": 2,
            "noise_std": 0.1,
            "size_dist": {"pareto_shape": 1.5, "s_min": 2, "s_max": 24},
            "ordering": "by_size_desc",
            "test_fraction": 0.2,
            "seed": 5
        },
        "optimizer": {"alpha": 0.01},
        "method": {"method": "finetune"},
        "epochs_per_task": 1,
        "batch_size": 4,
        "eval_interval": 4,
        "seeds": [1, 2]
    });
    fs::write(path, serde_json::to_string_pretty(&config).unwrap()).unwrap();
}

#[test]
fn run_writes_reproducible_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    write_tiny_config(&config_path);

    let out_a = dir.path().join("out_a");
    let out_b = dir.path().join("out_b");
    for out in [&out_a, &out_b] {
        let status = clab()
            .args(["run", "--config"])
            .arg(&config_path)
            .arg("--output-dir")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in ["summary.json", "seed_1/scores.csv", "seed_2/scores.csv"] {
        let a = fs::read(out_a.join(name)).unwrap();
        let b = fs::read(out_b.join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} not byte-identical across invocations");
    }
}

#[test]
fn output_dir_env_var_is_honored() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    write_tiny_config(&config_path);
    let out = dir.path().join("from_env");
    let status = clab()
        .args(["run", "--config"])
        .arg(&config_path)
        .env("CLAB_OUTPUT_DIR", &out)
        .status()
        .unwrap();
    assert!(status.success());
    assert!(out.join("summary.json").exists());
}

#[test]
fn grid_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    write_tiny_config(&config_path);
    let out = dir.path().join("grid_out");
    let status = clab()
        .args(["grid", "--config"])
        .arg(&config_path)
        .arg("--output-dir")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let grid = fs::read_to_string(out.join("grid.csv")).unwrap();
    let data_rows = grid
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("row,"))
        .count();
    assert_eq!(data_rows, 11);
    assert!(out.join("grid_summary.json").exists());
}

#[test]
fn sweep_accepts_range_syntax() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    write_tiny_config(&config_path);
    let out = dir.path().join("sweep_out");
    let status = clab()
        .args(["sweep", "--config"])
        .arg(&config_path)
        .args(["--checkpoints", "2:8:2"])
        .arg("--output-dir")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let sweep = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let data_rows = sweep
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("checkpoint,"))
        .count();
    assert_eq!(data_rows, 4);
}

#[test]
fn dump_sequence_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    write_tiny_config(&config_path);
    let seq_path = dir.path().join("sequence.json");
    let status = clab()
        .args(["dump-sequence", "--config"])
        .arg(&config_path)
        .arg("--out")
        .arg(&seq_path)
        .status()
        .unwrap();
    assert!(status.success());
    let value: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&seq_path).unwrap()).unwrap();
    assert_eq!(value["tasks"].as_array().unwrap().len(), 8);
    assert!(value["tasks"][0]["w_tau"].is_array());
}

#[test]
fn invalid_config_fails_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("config.json");
    fs::write(&config_path, "{\"not_a_field\": 1}").unwrap();
    let output = clab()
        .args(["run", "--config"])
        .arg(&config_path)
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(!output.stderr.is_empty());
}
