use std::path::Path;
use std::process::Command as Proc;

use rspnet_harness::commands::{figure_rows, resolve_threads};
use rspnet_harness::config::{MatrixSpec, Z0Spec};
use rspnet_harness::{run, Command, ExperimentConfig, HarnessError};

const SMALL: &str = r#"
[matrix]
kind = "mean_field"
n = 3

[sequence]
family = "power_law"
c = 1.0
gamma = 0.75
b = 0.1

[simulation]
n_steps = 1000
checkpoints = [0, 10, 100, 1000]

[estimation]
n = 20
t = 520
k = 16
long_horizon = 2000
compare_n = [200]

[replication]
runs = 6
master_seed = 99
"#;

fn small() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(SMALL).unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

fn header(dir: &Path, name: &str) -> Vec<String> {
    read(dir, name).lines().next().unwrap().split(',').map(str::to_string).collect()
}

#[test]
fn shipped_configs_round_trip() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let cfg = ExperimentConfig::load(&path).unwrap();
        let back = ExperimentConfig::from_toml_str(&cfg.to_toml_string().unwrap()).unwrap();
        assert_eq!(cfg, back, "{}", path.display());
    }
}

#[test]
fn simulate_row_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small();
    run(Command::Simulate, &cfg, tmp.path(), Some(1)).unwrap();
    let text = read(tmp.path(), "trajectories.csv");
    assert_eq!(text.lines().count(), 1 + 6 * 4);

    cfg.simulation.n_steps = 0;
    cfg.simulation.checkpoints.clear();
    cfg.replication.runs = 1;
    run(Command::Simulate, &cfg, tmp.path(), Some(1)).unwrap();
    assert_eq!(read(tmp.path(), "trajectories.csv").lines().count(), 2);

    cfg.simulation.n_steps = 500;
    cfg.replication.runs = 3;
    cfg.z0 = Z0Spec::Constant { value: 0.0 };
    run(Command::Simulate, &cfg, tmp.path(), Some(1)).unwrap();
    let cols = header(tmp.path(), "trajectories.csv");
    let zi = cols.iter().position(|c| c == "z_tilde").unwrap();
    for line in read(tmp.path(), "trajectories.csv").lines().skip(1) {
        assert_eq!(line.split(',').nth(zi).unwrap(), "0");
    }
    let index: serde_json::Value = serde_json::from_str(&read(tmp.path(), "index.json")).unwrap();
    assert_eq!(index["config_hash"], cfg.hash());
    assert_eq!(index["files"][0]["rows"], 6);
}

#[test]
fn regime_records() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.sequence = rspnet::SequenceSpec::power_law(0.8, 1.0, 1.0);
    let index = run(Command::Regime, &cfg, tmp.path(), Some(1)).unwrap();
    assert_eq!(index.summary["report"]["polarization_class"], "zero");
    cfg.sequence = rspnet::SequenceSpec::power_law(1.0, 0.4, 1.0);
    let index = run(Command::Regime, &cfg, tmp.path(), Some(1)).unwrap();
    assert_eq!(index.summary["report"]["polarization_class"], "almost_sure");
    assert_eq!(index.summary["report"]["p_one_if_almost_sure"], 0.5);
    cfg.sequence = rspnet::SequenceSpec::power_law(1.0, 0.0, 1.0);
    let err = run(Command::Regime, &cfg, tmp.path(), Some(1)).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn absorbed_start_gives_the_upper_barrier() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.replication.runs = 1;
    cfg.z0 = Z0Spec::Constant { value: 1.0 };
    run(Command::Estimate, &cfg, tmp.path(), Some(1)).unwrap();
    let cols = header(tmp.path(), "estimate.csv");
    let text = read(tmp.path(), "estimate.csv");
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    let get = |name: &str| row[cols.iter().position(|c| c == name).unwrap()];
    assert_eq!(get("case_id"), "2");
    assert_eq!(get("includes_one"), "true");
    assert_eq!(get("includes_zero"), "false");
    assert_eq!(get("inner_lo"), "");
}

#[test]
fn figure_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small();
    run(Command::Figure1, &cfg, tmp.path(), Some(1)).unwrap();
    let expected = [
        "run", "n", "t", "k", "z_tilde_n", "u0", "u1", "u01", "normalized", "case_id",
        "includes_zero", "includes_one", "inner_lo", "inner_hi", "theta", "parts", "target_t",
        "target_u0", "target_u1", "target_u01", "proxy_step", "z_tilde_proxy", "covered",
        "master_seed", "config_hash",
    ];
    assert_eq!(header(tmp.path(), "figure1.csv"), expected);
    // Two snapshot steps per run.
    assert_eq!(read(tmp.path(), "figure1.csv").lines().count(), 1 + 2 * 6);
    assert!(figure_rows(&[], 1e-3, 0, "").is_empty());
}

#[test]
fn outputs_do_not_depend_on_threads_or_execution() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let c = tempfile::tempdir().unwrap();
    let mut cfg = small();
    cfg.output.records = true;
    for cmd in [Command::Simulate, Command::Estimate, Command::Figure2, Command::Coverage] {
        let ia = run(cmd, &cfg, a.path(), Some(1)).unwrap();
        let ib = run(cmd, &cfg, b.path(), Some(3)).unwrap();
        let mut seq = cfg.clone();
        seq.replication.execution = rspnet::Execution::Sequential;
        let ic = run(cmd, &seq, c.path(), Some(2)).unwrap();
        for f in &ia.files {
            let x = std::fs::read(a.path().join(&f.name)).unwrap();
            assert_eq!(x, std::fs::read(b.path().join(&f.name)).unwrap(), "{}", f.name);
            assert_eq!(x, std::fs::read(c.path().join(&f.name)).unwrap(), "{}", f.name);
        }
        assert_eq!(ia.files, ib.files);
        assert_eq!(ia.files, ic.files);
    }
}

#[test]
fn thread_override_rules() {
    let mut cfg = small();
    cfg.replication.threads = Some(2);
    assert_eq!(resolve_threads(&cfg, None).unwrap(), Some(2));
    assert_eq!(resolve_threads(&cfg, Some("5")).unwrap(), Some(5));
    assert!(matches!(resolve_threads(&cfg, Some("zero")), Err(HarnessError::Config(_))));
}

#[test]
fn binary_exit_codes() {
    let exe = env!("CARGO_BIN_EXE_rspnet");
    let tmp = tempfile::tempdir().unwrap();
    let good = tmp.path().join("good.toml");
    let mut cfg = small();
    cfg.matrix = MatrixSpec::Inline {
        rows: vec![vec![0.5, 0.25], vec![0.5, 0.75]],
    };
    std::fs::write(&good, cfg.to_toml_string().unwrap()).unwrap();
    let out = tmp.path().join("out");
    let status = Proc::new(exe)
        .args(["regime", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(&out)
        .env("THREADS", "2")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(out.join("regime.json").exists());

    let bad = tmp.path().join("bad.toml");
    std::fs::write(&bad, "[matrix]\nkind = \"mean_field\"\n").unwrap();
    let status = Proc::new(exe).args(["simulate", "--config"]).arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(1));

    let status = Proc::new(exe)
        .args(["simulate", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(&out)
        .env("THREADS", "many")
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));

    // An output path under a regular file cannot be created.
    let blocked = good.join("sub");
    let status = Proc::new(exe)
        .args(["simulate", "--config"])
        .arg(&good)
        .arg("--out")
        .arg(&blocked)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}
