use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use carshare::instance::{micro_corpus, Instance};
use carshare::oracle::brute_force_optimum;
use serde_json::Value;

fn carshare(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carshare"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn reports(o: &Output) -> Vec<Value> {
    stdout(o).lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn generate_count_zero_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let o = carshare(&["generate", "--n", "20", "--count", "0", "--out", "g"], dir.path());
    assert!(o.status.success());
    assert_eq!(fs::read_dir(dir.path().join("g")).unwrap().count(), 0);
}

#[test]
fn generate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for out in ["a", "b"] {
        let o = carshare(&["generate", "--group", "ft", "--n", "30", "--count", "2", "--seed", "5", "--out", out], dir.path());
        assert!(o.status.success());
    }
    for name in ["ft-n30-s5.txt", "ft-n30-s6.txt"] {
        let a = fs::read_to_string(dir.path().join("a").join(name)).unwrap();
        let b = fs::read_to_string(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b);
        assert_eq!(Instance::parse(&a).unwrap().len(), 30);
    }
}

#[test]
fn all_or_nothing_solves_to_four() {
    let dir = tempfile::tempdir().unwrap();
    assert!(carshare(&["generate", "--fixture", "all-or-nothing"], dir.path()).status.success());
    for method in ["bb", "grasp", "vns", "ts"] {
        let o = carshare(
            &["solve", "--method", method, "--time-limit", "0.5", "all_or_nothing.txt"],
            dir.path(),
        );
        assert!(o.status.success(), "{method}");
        let r = &reports(&o)[0];
        assert_eq!(r["value"], 4, "{method}");
        assert_eq!(r["instance"], "all_or_nothing");
    }
}

#[test]
fn preprocess_network_example() {
    let dir = tempfile::tempdir().unwrap();
    assert!(carshare(&["generate", "--fixture", "network-example"], dir.path()).status.success());
    let o = carshare(&["preprocess", "network_example.txt"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    let row: Vec<&str> = text.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row, ["network_example", "14", "22", "6", "11"]);
}

#[test]
fn export_writes_mps_sections() {
    let dir = tempfile::tempdir().unwrap();
    assert!(carshare(&["generate", "--fixture", "nested-five"], dir.path()).status.success());
    let o = carshare(&["export", "--out", "m.mps", "nested_five.txt"], dir.path());
    assert!(o.status.success());
    let mps = fs::read_to_string(dir.path().join("m.mps")).unwrap();
    for section in ["NAME", "ROWS", "COLUMNS", "RHS", "BOUNDS", "ENDATA"] {
        assert!(mps.lines().any(|l| l.starts_with(section)), "{section}");
    }
    let o = carshare(&["export", "--format", "lp", "nested_five.txt"], dir.path());
    assert!(o.status.success());
    assert!(stdout(&o).contains("Subject To"));
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.txt"), "not an instance\n").unwrap();
    for args in [
        &["solve", "bad.txt"][..],
        &["solve", "missing.txt"],
        &["preprocess", "bad.txt"],
        &["priority-stats", "missing.txt"],
    ] {
        let o = carshare(args, dir.path());
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8(o.stderr).unwrap();
        assert_eq!(err.matches("error:").count(), 1, "{err}");
    }
}

#[test]
fn branch_and_bound_matches_oracle() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = micro_corpus(12, 31);
    let mut names = Vec::new();
    for (i, inst) in corpus.iter().enumerate() {
        let name = format!("micro-s{i}.txt");
        inst.write(dir.path().join(&name)).unwrap();
        names.push(name);
    }
    for model in ["cs1", "cs2"] {
        let mut args = vec!["solve", "--model", model, "--time-limit", "10", "--csv", "agg.csv"];
        args.extend(names.iter().map(String::as_str));
        let o = carshare(&args, dir.path());
        assert!(o.status.success());
        let rs = reports(&o);
        assert_eq!(rs.len(), corpus.len());
        for (r, inst) in rs.iter().zip(&corpus) {
            let (best, _) = brute_force_optimum(inst).unwrap();
            assert_eq!(r["value"].as_u64(), Some(best as u64));
            assert_eq!(r["status"], "optimal");
            assert_eq!(r["model"], model);
        }
        let csv = fs::read_to_string(dir.path().join("agg.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert!(csv.lines().nth(1).unwrap().starts_with("micro,"));
    }
}

#[test]
fn heuristics_on_empty_instance() {
    let dir = tempfile::tempdir().unwrap();
    Instance::empty(1, 1).write(dir.path().join("empty.txt")).unwrap();
    for method in ["bb", "grasp", "vns", "ts"] {
        let o = carshare(&["solve", "--method", method, "--time-limit", "1", "empty.txt"], dir.path());
        assert!(o.status.success(), "{method}");
        assert_eq!(reports(&o)[0]["value"], 0, "{method}");
    }
}

#[test]
fn priority_stats_rows() {
    let dir = tempfile::tempdir().unwrap();
    assert!(carshare(&["generate", "--n", "200", "--count", "2"], dir.path()).status.success());
    let o = carshare(&["priority-stats", "st-n200-s1.txt", "st-n200-s2.txt"], dir.path());
    assert!(o.status.success());
    let text = stdout(&o);
    assert_eq!(text.lines().count(), 3);
    for line in text.lines().skip(1) {
        let f: Vec<usize> = line.split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert!(f[2] <= f[1] && f[1] <= f[0], "{line}");
    }
}
