use std::process::{Command, Output};

use kadhop::{Preset, SystemSpec};
use kadhop_cli::config::Mode;
use kadhop_cli::RunConfig;

fn kadhop(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kadhop"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

#[test]
fn dumped_config_reproduces_the_run() {
    let flags = ["analytic", "--preset", "kad", "--n", "2000", "--stale", "0.1", "--htl", "6"];
    let dumped = kadhop(&[&flags[..], &["--dump-config"]].concat());
    assert!(dumped.status.success());
    let text = stdout(&dumped);
    let cfg = RunConfig::from_json(&text).unwrap();
    assert_eq!(cfg.mode, Mode::Analytic);
    assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.json");
    std::fs::write(&path, text).unwrap();
    let direct = kadhop(&flags);
    let replayed = kadhop(&["--config", path.to_str().unwrap()]);
    assert!(direct.status.success() && replayed.status.success());
    assert_eq!(stdout(&direct), stdout(&replayed));
    let lines: Vec<String> = stdout(&direct).lines().map(String::from).collect();
    assert_eq!(lines[0], "system,n,alpha,beta,stale,bound,hop,cumulative,mean");
    // htl = 6 hops for each of the two bounds
    assert_eq!(lines.len(), 1 + 2 * 6);
}

#[test]
fn seeded_simulation_is_reproducible() {
    let args = ["simulate", "--preset", "mdht", "--n", "300", "--topologies", "3", "--targets", "2", "--seed", "9"];
    let a = kadhop(&args);
    let b = kadhop(&args);
    assert!(a.status.success());
    assert_eq!(stdout(&a), stdout(&b));
    assert!(stdout(&a).lines().skip(1).all(|l| l.contains(",simulated,")));
}

#[test]
fn exit_codes_follow_the_failure_class() {
    assert_eq!(kadhop(&["analytic", "--preset", "nope", "--n", "1000"]).status.code(), Some(1));
    assert_eq!(kadhop(&["analytic", "--preset", "kad"]).status.code(), Some(1));
    assert_eq!(kadhop(&["analytic", "--preset", "kad", "--n", "1000", "--delta", "2"]).status.code(), Some(1));
    assert_eq!(kadhop(&[]).status.code(), Some(1));
    assert_eq!(
        kadhop(&["analytic", "--preset", "kad", "--n", "1000", "--alpha", "4", "--beta", "4"]).status.code(),
        Some(2)
    );
    assert_eq!(
        kadhop(&["analytic", "--preset", "kad", "--n", "1000", "--max-states", "10"]).status.code(),
        Some(2)
    );
    assert_eq!(
        kadhop(&["analytic", "--preset", "kad", "--n", "1000", "-o", "/nonexistent/dir/out.csv"]).status.code(),
        Some(3)
    );
    assert_eq!(kadhop(&["--config", "/nonexistent/run.json"]).status.code(), Some(1));
}

#[test]
fn sweep_marks_capacity_errors_instead_of_dropping_cells() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sweep.csv");
    let out = kadhop(&[
        "sweep", "--presets", "mdht,kad", "--routing", "2:1,4:4", "--n-grid", "0:1", "--stale", "0,0.2",
        "-o", path.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let mut reader = csv::Reader::from_path(&path).unwrap();
    let mut cells = std::collections::BTreeSet::new();
    let mut error_rows = 0;
    for rec in reader.records() {
        let rec = rec.unwrap();
        cells.insert((rec[0].to_string(), rec[1].to_string(), rec[2].to_string(), rec[4].to_string(), rec[5].to_string()));
        if &rec[6] == "error" {
            error_rows += 1;
            assert_eq!((&rec[2], &rec[3]), ("4", "4"));
            assert!(rec[7].is_empty() && rec[8].is_empty());
        }
    }
    // 2 presets × 2 routings × 2 sizes × 2 stale rates × 2 bounds
    assert_eq!(cells.len(), 32);
    assert_eq!(error_rows, 16);
}

#[test]
fn sweep_output_does_not_depend_on_worker_count() {
    let run = |workers: &str| {
        Command::new(env!("CARGO_BIN_EXE_kadhop"))
            .args(["sweep", "--presets", "kad4", "--routing", "1:1,2:2", "--n-grid", "0:2", "--stale", "0,0.1"])
            .env("KADHOP_WORKERS", workers)
            .output()
            .unwrap()
    };
    let one = run("1");
    assert!(one.status.success());
    assert_eq!(stdout(&one), stdout(&run("3")));
}

#[test]
fn spec_files_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("small.json");
    let spec = SystemSpec::preset(Preset::Mdht, 12, 500, 2, 1).unwrap();
    std::fs::write(&path, spec.to_json()).unwrap();
    let out = kadhop(&["analytic", "--spec", path.to_str().unwrap(), "--n", "800", "--bound", "upper", "--format", "json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r["system"] == "small" && r["n"] == 800 && r["bound"] == "upper"));
    let last = rows.last().unwrap()["cumulative"].as_f64().unwrap();
    assert!((last - 1.0).abs() < 1e-9);
}

#[test]
fn contact_dump_is_a_distribution() {
    let out = kadhop(&["contacts", "--preset", "kad", "--n", "5000", "--d", "9", "--gamma", "2"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("tuple,probability"));
    let total: f64 = lines.map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-9);
    assert_eq!(kadhop(&["contacts", "--preset", "kad", "--n", "5000", "--d", "99"]).status.code(), Some(1));
}
