use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cbl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cbl"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures")
        .join(format!("{name}.json"))
        .display()
        .to_string()
}

#[test]
fn pomis_lists_sets_one_per_line() {
    let out = cbl(&["pomis", "--graph", &fixture("task1")]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "{B}\n{A,B}\n");
}

#[test]
fn pomis_on_bare_graph_needs_reward() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("g.json");
    fs::write(
        &path,
        r#"{"vars": ["X", "Y"], "edges": [["X", "Y"]], "bidirected": [["X", "Y"]]}"#,
    )
    .unwrap();
    let path = path.to_str().unwrap();
    assert!(!cbl(&["pomis", "--graph", path]).status.success());
    let out = cbl(&["pomis", "--graph", path, "--reward", "Y"]);
    assert!(out.status.success());
    assert_eq!(stdout(&out), "{}\n{X}\n");
    let out = cbl(&["pomis", "--graph", path, "--reward", "Y", "--nonmanip", "X"]);
    assert_eq!(stdout(&out), "{}\n");
}

#[test]
fn bounds_report_dominance_values() {
    let out = cbl(&["bounds", "--task", "2", "--sources", "identity"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(
        text.starts_with("l_star 0.484386  u_star 0.7697\n"),
        "{text}"
    );
    assert!(
        text.contains("do(B=1)\t0.275175\t0.806567\tfalse\t2\t0.7697\tfalse\n"),
        "{text}"
    );
}

#[test]
fn validate_exit_codes() {
    let verbatim = cbl(&["validate", "--task", "3-verbatim"]);
    assert!(!verbatim.status.success());
    let repaired = cbl(&["validate", "--task", "3"]);
    assert!(repaired.status.success());
    assert!(String::from_utf8_lossy(&repaired.stderr).contains("warning"));
    assert!(cbl(&["validate", "--fixture", &fixture("task1")])
        .status
        .success());
}

#[test]
fn unknown_task_is_an_error() {
    let out = cbl(&["bounds", "--task", "7"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn simulate_is_deterministic_across_threads() {
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut tables = Vec::new();
    for (d, threads) in dirs.iter().zip(["1", "2"]) {
        let out = cbl(&[
            "simulate",
            "--task",
            "1",
            "--trials",
            "500",
            "--reps",
            "10",
            "--seed",
            "3",
            "--threads",
            threads,
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        tables.push(stdout(&out));
    }
    assert_eq!(tables[0], tables[1]);
    for name in [
        "summary.csv",
        "traces_trucb.csv",
        "plotdata.csv",
        "report.txt",
        "sources.json",
    ] {
        assert_eq!(
            fs::read(dirs[0].path().join(name)).unwrap(),
            fs::read(dirs[1].path().join(name)).unwrap(),
            "{name}"
        );
    }
    let summary = fs::read_to_string(dirs[0].path().join("summary.csv")).unwrap();
    let header = summary.lines().next().unwrap();
    assert_eq!(
        header,
        "algo,arms,mean_regret,std_regret,regret_bound,ratio_to_poucb,mu_star,l_star,u_star"
    );
    assert_eq!(summary.lines().count(), 4);
}

#[test]
fn simulate_format_selection() {
    let d = tempfile::tempdir().unwrap();
    let out = cbl(&[
        "simulate",
        "--task",
        "2",
        "--trials",
        "100",
        "--reps",
        "2",
        "--algos",
        "trucb",
        "--format",
        "table",
        "--out",
        d.path().to_str().unwrap(),
    ]);
    assert!(out.status.success());
    assert!(d.path().join("report.txt").exists());
    assert!(!d.path().join("summary.csv").exists());
    assert!(!d.path().join("plotdata.csv").exists());
}
