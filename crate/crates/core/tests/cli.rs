use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use msth::harness::{ExperimentSpec, RunSummary, STEP_COLUMNS};

fn msth(args: &[&str], root: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msth"))
        .args(args)
        .env("MSTH_OUTPUT_ROOT", root)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const SMALL: &str = "name = small
dataset.kind = blobs
dataset.n = 120
network.hidden = 8
train.epochs = 2
output.dir = small
";

#[test]
fn run_writes_all_outputs() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("small.conf");
    fs::write(&cfg, SMALL).unwrap();
    let o = msth(
        &[
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--set",
            "train.lr=0.01",
        ],
        root.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("config_hash:"));

    let dir = root.path().join("small");
    let csv = fs::read_to_string(dir.join("steps.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), STEP_COLUMNS.join(","));
    assert!(csv.lines().count() > 1);
    assert_eq!(csv.matches("fold,step").count(), 1);

    let summary: RunSummary =
        serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.name, "small");

    // the resolved config reloads to the same spec and hash
    let resolved = fs::read_to_string(dir.join("config.resolved")).unwrap();
    let spec = ExperimentSpec::from_text(&resolved).unwrap();
    assert_eq!(spec.train.lr, 0.01);
    assert_eq!(summary.config_hash, spec.config_hash());
    assert!(resolved.starts_with(&format!("# config_hash: {}", spec.config_hash())));
    assert!(dir.join("timing.json").exists());
}

#[test]
fn report_collects_runs() {
    let root = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let o = msth(
            &[
                "run",
                "--set",
                "dataset.n=60",
                "--set",
                "train.epochs=1",
                "--set",
                &format!("output.dir=runs/{name}"),
            ],
            root.path(),
        );
        assert!(o.status.success());
    }
    let runs = root.path().join("runs");
    let o = msth(&["report", "--in", runs.to_str().unwrap()], root.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3, "{text}");
    assert!(text.lines().nth(1).unwrap().starts_with("a,"));
    assert!(runs.join("report.csv").exists() && runs.join("report.json").exists());
}

#[test]
fn ablate_writes_a_row_per_cell() {
    let root = tempfile::tempdir().unwrap();
    let matrix = root.path().join("m.txt");
    fs::write(&matrix, "msth.coordination = true | false\n").unwrap();
    let o = msth(
        &[
            "ablate",
            "--matrix",
            matrix.to_str().unwrap(),
            "--set",
            "dataset.n=60",
            "--set",
            "train.epochs=1",
            "--set",
            "run.replicates=2",
            "--set",
            "output.dir=abl",
        ],
        root.path(),
    );
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(root.path().join("abl/ablation.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(root.path().join("abl/ablation.json").exists());
}

#[test]
fn exit_codes() {
    let root = tempfile::tempdir().unwrap();
    let bad_key = msth(&["run", "--set", "train.nonsense=1"], root.path());
    assert_eq!(bad_key.status.code(), Some(2));
    let missing = msth(
        &[
            "run",
            "--set",
            "dataset.kind=tabular",
            "--set",
            "dataset.path=/no/such/file.csv",
        ],
        root.path(),
    );
    assert_eq!(missing.status.code(), Some(3));
    let empty = root.path().join("empty.txt");
    fs::write(&empty, "# nothing\n").unwrap();
    let o = msth(
        &["ablate", "--matrix", empty.to_str().unwrap()],
        root.path(),
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn selftest_passes() {
    let root = tempfile::tempdir().unwrap();
    let o = msth(&["selftest"], root.path());
    assert!(o.status.success(), "{}", stdout(&o));
    assert!(stdout(&o).contains("0 failed"));
}
