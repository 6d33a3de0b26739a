use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "\
sbm.nodes = 120
sbm.clusters = 2
sbm.p_in = 0.1
sbm.p_out = 0.01
sbm.dim = 8
epochs = 30
seeds = 0
";

fn gnnguard(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gnnguard"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    fs::write(&path, text).unwrap();
    path.display().to_string()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn clean_run_prints_table_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = gnnguard(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
    let text = stdout(&o);
    assert!(
        text.contains("No Attack") && text.contains("guard"),
        "{text}"
    );
    let hash = text
        .split("[config ")
        .nth(1)
        .unwrap()
        .split(']')
        .next()
        .unwrap();
    assert!(out.join(hash).join("report.csv").is_file());
}

#[test]
fn seeds_flag_overrides_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out");
    let o = gnnguard(&[
        "run",
        "--config",
        &cfg,
        "--out",
        out.to_str().unwrap(),
        "--seeds",
        "4,5",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let run = fs::read_dir(&out).unwrap().next().unwrap().unwrap().path();
    let csv = fs::read_to_string(run.join("report.csv")).unwrap();
    let seeds: Vec<&str> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(4).unwrap())
        .collect();
    assert_eq!(seeds, ["4", "5", "4", "5"]);
    assert!(run.join("seed-4").join("config.txt").is_file());
}

#[test]
fn config_problems_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "colour = blue\n");
    assert_eq!(gnnguard(&["run", "--config", &bad]).status.code(), Some(2));
    let missing = dir.path().join("nope.cfg");
    assert_eq!(
        gnnguard(&["run", "--config", missing.to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let invalid = write_config(dir.path(), "p0 = 2\n");
    let o = gnnguard(&["ablate", "--config", &invalid]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("p0"));
    assert_eq!(gnnguard(&["gen"]).status.code(), Some(2));
    assert_eq!(gnnguard(&["sweep"]).status.code(), Some(2));
}

#[test]
fn failed_seeds_exit_with_three_and_keep_partial_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &format!("{SMALL}defense = none, jaccard\n"));
    let out = dir.path().join("out");
    let o = gnnguard(&["run", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("PARTIAL: seed 0 failed"));
    let run = fs::read_dir(&out).unwrap().next().unwrap().unwrap().path();
    assert!(fs::read_to_string(run.join("report.csv"))
        .unwrap()
        .contains("# failed seed 0"));
}

#[test]
fn gen_and_orbits_write_dataset_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "dataset = cycle-house\nsimilarity = graphlet\nhouse.cycle = 20\nhouse.count = 4\nseeds = 0\n",
    );
    let out = dir.path().join("data");
    let o = gnnguard(&["gen", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(
        stdout(&o).contains("40 nodes, 52 edges, 6 classes"),
        "{}",
        stdout(&o)
    );
    assert_eq!(
        fs::read_to_string(out.join("labels.txt"))
            .unwrap()
            .lines()
            .count(),
        40
    );
    assert!(out.join("edges.txt").is_file() && out.join("features.csv").is_file());
    let o = gnnguard(&["orbits", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let orbits = fs::read_to_string(out.join("orbits.csv")).unwrap();
    assert_eq!(orbits.lines().count(), 40);
    assert!(orbits.lines().all(|l| l.split(',').count() == 15));
}

#[test]
fn files_dataset_replays_generated_graph() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let data = dir.path().join("data");
    assert_eq!(
        gnnguard(&["gen", "--config", &cfg, "--out", data.to_str().unwrap()])
            .status
            .code(),
        Some(0)
    );
    let files = format!(
        "dataset = files\nfiles.edges = {}\nfiles.features = {}\nfiles.labels = {}\nepochs = 30\nseeds = 0\n",
        data.join("edges.txt").display(),
        data.join("features.csv").display(),
        data.join("labels.txt").display()
    );
    let cfg = write_config(dir.path(), &files);
    let o = gnnguard(&["run", "--config", &cfg]);
    assert_eq!(
        o.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&o.stderr)
    );
}

#[test]
fn bench_prints_scaling_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "bench.sizes = 100, 200\nbench.reps = 2\nbench.dim = 4\n",
    );
    let out = dir.path().join("bench");
    let o = gnnguard(&["bench", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("edges,nodes,dim,seconds\n100,"), "{text}");
    assert!(text.contains("R^2"));
    assert_eq!(fs::read_to_string(out.join("scaling.csv")).unwrap(), text);
}
