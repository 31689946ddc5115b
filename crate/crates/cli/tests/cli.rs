use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use minifair_core::ingest::DatasetFormat;
use minifair_core::synth::{self, SyntheticSpec};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_minifair"));
    c.env_remove("MINIFAIR_THREADS").env("RUST_LOG", "warn");
    c
}

fn dataset(dir: &Path) {
    let (raw, groups) = synth::generate(&SyntheticSpec {
        n_users: 40,
        n_items: 30,
        seed: 2,
        ..Default::default()
    });
    synth::write_movielens(dir, DatasetFormat::Ml100k, &raw, &groups).unwrap();
}

const FAST: &str = r#"
dataset_format = "ml-100k"
checkpoints = [0, 2, 4]

[split]
k_core = 2

[sim]
known_init_fraction = 0.05
max_iterations = 4

[sim.hyperparams]
n_factors = 4
n_epochs = 3
"#;

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn grid_writes_one_trace_per_run_plus_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    dataset(&data);
    let cfg = tmp.path().join("exp.toml");
    fs::write(&cfg, FAST).unwrap();
    let out_dir = tmp.path().join("out");

    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--dataset")
        .arg(&data)
        .arg("--out")
        .arg(&out_dir)
        .args(["--strategy", "random,pop", "--mode", "original", "--mode", "equal-ratio", "--seed", "3"])
        .output()
        .unwrap();
    ok(&out);
    assert!(out.stdout.is_empty());
    assert_eq!(
        listing(&out_dir),
        vec![
            "plot_data.csv",
            "pop_equal-ratio_seed3.csv",
            "pop_original_seed3.csv",
            "random_equal-ratio_seed3.csv",
            "random_original_seed3.csv",
            "summary.csv",
        ]
    );
    let summary = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    assert_eq!(summary.lines().next().unwrap(), "strategy,mode,seed,group,i=0,i=2,i=4");
    assert_eq!(summary.lines().count(), 1 + 4 * 2);

    // Same command, same bytes.
    let again = tmp.path().join("again");
    let out = bin()
        .args(["run", "--config"])
        .arg(&cfg)
        .arg("--dataset")
        .arg(&data)
        .arg("--out")
        .arg(&again)
        .args(["--strategy", "random,pop", "--mode", "original,equal-ratio", "--seed", "3"])
        .env("MINIFAIR_THREADS", "2")
        .output()
        .unwrap();
    ok(&out);
    for name in listing(&out_dir) {
        assert_eq!(
            fs::read(out_dir.join(&name)).unwrap(),
            fs::read(again.join(&name)).unwrap(),
            "{name}"
        );
    }
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("data");
    dataset(&data);
    let cfg = tmp.path().join("exp.toml");
    fs::write(
        &cfg,
        format!("{FAST}\n").replace("checkpoints", "strategies = [\"var\"]\nseeds = [1]\ncheckpoints"),
    )
    .unwrap();
    let out_dir = tmp.path().join("out");
    let out = bin()
        .args(["run", "-c"])
        .arg(&cfg)
        .arg("--dataset")
        .arg(&data)
        .arg("--out")
        .arg(&out_dir)
        .args(["--seed", "9", "--max-iterations", "1", "--eval-every", "1", "--query-size", "2"])
        .output()
        .unwrap();
    ok(&out);
    let trace = fs::read_to_string(out_dir.join("var_original_seed9.csv")).unwrap();
    let iterations: Vec<&str> = trace.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(iterations, vec!["0", "1"]);
}

#[test]
fn failures_exit_nonzero_with_a_diagnostic() {
    let tmp = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--format", "ml-100k", "--dataset"])
        .arg(tmp.path().join("missing"))
        .arg("--out")
        .arg(tmp.path().join("out"))
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("u.data"));

    let out = bin().args(["run", "--strategy", "oracle"]).output().unwrap();
    assert!(!out.status.success());

    let data = tmp.path().join("data");
    dataset(&data);
    let out = bin()
        .args(["run", "--format", "ml-100k", "--dataset"])
        .arg(&data)
        .env("MINIFAIR_THREADS", "0")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("threads"));
}

#[test]
fn stats_and_default_config() {
    let tmp = tempfile::tempdir().unwrap();
    dataset(tmp.path());
    let out = bin()
        .args(["stats", "--format", "ml-100k", "--k-core", "2", "--dataset"])
        .arg(tmp.path())
        .output()
        .unwrap();
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l == "users\t40"), "{text}");
    assert!(text.contains("protected_users\t"));

    let out = bin().arg("default-config").output().unwrap();
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("checkpoints = [0, 50, 100, 150, 200, 250, 300]"), "{text}");
}
