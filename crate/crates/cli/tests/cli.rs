use std::path::Path;
use std::process::{Command, Output};

fn privreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_privreg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn body(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

#[test]
fn usage_errors_exit_with_two() {
    for args in [
        vec!["sweep-n", "--bogus"],
        vec!["calibrate", "--epsilon", "0"],
        vec!["sweep-n", "--schedules", "cubic"],
        vec!["bounds", "--delta-free", "-1"],
        vec!["frobnicate"],
    ] {
        assert_eq!(privreg(&args).status.code(), Some(2), "{args:?}");
    }
}

#[test]
fn runtime_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.csv");
    let out = privreg(&["classify", "--input-csv", missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));

    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,0,1\n0,abc,-1\n0.5,0.5,1\n").unwrap();
    let out = privreg(&[
        "classify",
        "--input-csv",
        bad.to_str().unwrap(),
        "--label-col",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));

    // projection dimension at least n
    let out = privreg(&[
        "sweep-eps",
        "--n",
        "20",
        "--d",
        "3",
        "--rows-per-k",
        "1",
        "--base",
        "50",
        "--schedules",
        "log",
    ]);
    assert_eq!(out.status.code(), Some(0), "dimensions are capped at n - 1");
    let out = privreg(&["calibrate", "--epsilon", "0.5", "--n-prime", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn calibrate_prints_report_to_stdout() {
    let out = privreg(&[
        "calibrate",
        "--epsilon",
        "0.5",
        "--n-prime",
        "16",
        "--f-sq",
        "5",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("# base_seed=0"));
    let row = text.lines().last().unwrap();
    let cells: Vec<&str> = row.split(',').collect();
    assert_eq!(cells[1].parse::<f64>().unwrap(), 1.0);
    assert_eq!(cells[4].parse::<f64>().unwrap(), 11.0);
}

#[test]
fn bounds_marks_vacuous_additive_bound() {
    let dir = tempfile::tempdir().unwrap();
    let out_path = dir.path().join("b.csv");
    let out = privreg(&[
        "bounds",
        "--n",
        "200",
        "--d",
        "20",
        "--epsilon",
        "1,6",
        "--schedules",
        "none,log",
        "--base",
        "50",
        "--rows-per-k",
        "100",
        "--out",
        out_path.to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let rows = body(&out_path);
    assert_eq!(rows.len(), 5);
    assert!(
        rows[1].starts_with("additive,")
            && rows[1].contains(",vacuous,")
            && rows[1].contains(",inf,")
    );
    assert!(rows[3].starts_with("additive,") && rows[3].contains(",ok,"));
    assert!(rows[2].contains("c0;c1;c2"));
}

#[test]
fn thread_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "sweep-n",
        "--d",
        "4",
        "--k-min",
        "1",
        "--k-max",
        "3",
        "--base",
        "10",
        "--rows-per-k",
        "30",
        "--trials",
        "4",
    ];
    let mut bodies = Vec::new();
    for threads in ["1", "3"] {
        let path = dir.path().join(format!("t{threads}.csv"));
        let out = Command::new(env!("CARGO_BIN_EXE_privreg"))
            .args(args)
            .args(["--out", path.to_str().unwrap()])
            .env("PRIVREG_THREADS", threads)
            .output()
            .unwrap();
        assert!(out.status.success());
        bodies.push(body(&path));
    }
    assert_eq!(bodies[0], bodies[1]);
    assert_eq!(bodies[0].len(), 1 + 3 * 4);

    let out = Command::new(env!("CARGO_BIN_EXE_privreg"))
        .args(["calibrate", "--epsilon", "1"])
        .env("PRIVREG_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn seeds_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let mut bodies = Vec::new();
    for seed in ["1", "2"] {
        let path = dir.path().join(format!("s{seed}.csv"));
        let out = privreg(&[
            "classify",
            "--n",
            "200",
            "--d",
            "6",
            "--rows-per-k",
            "50",
            "--base",
            "20",
            "--trials",
            "2",
            "--seed",
            seed,
            "--out",
            path.to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        bodies.push(body(&path));
    }
    assert_ne!(bodies[0], bodies[1]);
}
