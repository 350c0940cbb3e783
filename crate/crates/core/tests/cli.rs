use std::path::Path;
use std::process::{Command, Output};

use hdtwosample::cli::{EXPERIMENT_HEADER, VERIFY_HEADER};

fn hdts(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hdts"))
        .args(args)
        .current_dir(dir)
        .env_remove("HDTS_OUT_DIR")
        .output()
        .expect("run hdts")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) {
    std::fs::write(dir.join(name), text).unwrap();
}

fn gaussian_files(dir: &Path, d: usize, n: usize) {
    write(dir, "p.toml", &format!("family = \"gaussian\"\nd = {d}\n"));
    write(dir, "q.toml", &format!("family = \"gaussian\"\nd = {d}\nshift = \"experiment1\"\n"));
    let n = n.to_string();
    for (cfg, seed, out) in [("p.toml", "1", "x.txt"), ("q.toml", "2", "y.txt"), ("p.toml", "3", "z.txt")] {
        let o = hdts(&["sample", "--config", cfg, "--n", &n, "--seed", seed, "--out", out], dir);
        assert_eq!(o.status.code(), Some(0));
    }
}

#[test]
fn identical_files_do_not_reject() {
    let dir = tempfile::tempdir().unwrap();
    gaussian_files(dir.path(), 20, 40);
    for stat in ["cq", "mmd", "ed", "edg"] {
        let o = hdts(&["test", "x.txt", "x.txt", "--statistic", stat, "--seed", "11"], dir.path());
        assert_eq!(o.status.code(), Some(0), "{stat}");
        let out = stdout(&o);
        let row = out.lines().nth(1).unwrap();
        assert!(row.contains(",false,"), "{row}");
    }
}

#[test]
fn clear_shift_rejects_with_exit_three() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "p.toml", "family = \"gaussian\"\nd = 10\n");
    let mut shifted = String::new();
    let x = hdts(&["sample", "--config", "p.toml", "--n", "60", "--seed", "1"], dir.path());
    write(dir.path(), "x.txt", &stdout(&x));
    let y = hdts(&["sample", "--config", "p.toml", "--n", "60", "--seed", "2"], dir.path());
    for line in stdout(&y).lines() {
        let v: Vec<String> = line.split(',').map(|c| (c.parse::<f64>().unwrap() + 2.0).to_string()).collect();
        shifted.push_str(&v.join(","));
        shifted.push('\n');
    }
    write(dir.path(), "y.txt", &shifted);
    let o = hdts(&["test", "x.txt", "y.txt", "--statistic", "cq"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    let o = hdts(
        &["test", "x.txt", "y.txt", "--statistic", "mmd", "--calibration", "oracle_theory", "--oracle-variance", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("reject = true"));
}

#[test]
fn input_errors_exit_two_with_location() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    write(root, "good.txt", "1,2\n3,4\n5,6\n");
    write(root, "ragged.txt", "1,2\n3,4,5\n6,7\n");
    write(root, "word.txt", "1,2\nabc,4\n6,7\n");
    write(root, "one.txt", "1,2\n");
    write(root, "short.txt", "1,2\n3,4\n");
    write(root, "wide.txt", "1,2,3\n3,4,5\n5,6,7\n");
    let cases = [
        ("ragged.txt", "ragged.txt:2:5: expected 2 fields, found 3"),
        ("word.txt", "word.txt:2:1: not a number: `abc`"),
        ("one.txt", "need at least 2 rows"),
        ("short.txt", "sample size mismatch"),
        ("wide.txt", "dimension"),
    ];
    for (file, needle) in cases {
        let o = hdts(&["test", "good.txt", file], root);
        assert_eq!(o.status.code(), Some(2), "{file}");
        let err = String::from_utf8_lossy(&o.stderr);
        assert!(err.contains(needle), "{file}: {err}");
    }
    assert_eq!(hdts(&["test", "good.txt", "missing.txt"], root).status.code(), Some(2));
    assert_eq!(hdts(&["test", "good.txt", "good.txt", "--budget", "block:2"], root).status.code(), Some(2));
    assert_eq!(hdts(&["test", "good.txt", "good.txt", "--calibration", "permutation:10"], root).status.code(), Some(2));
    assert_eq!(hdts(&["frobnicate"], root).status.code(), Some(2));
}

#[test]
fn help_documents_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = hdts(&["--help"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.contains("3 test rejected the null"), "{text}");
}

#[test]
fn theory_rows() {
    let dir = tempfile::tempdir().unwrap();
    let value = |args: &[&str]| {
        let o = hdts(args, dir.path());
        assert_eq!(o.status.code(), Some(0), "{args:?}");
        let out = stdout(&o);
        let row = out.lines().nth(1).unwrap().to_string();
        assert!(row.starts_with(args[1]), "{row}");
        row.rsplit(',').next().unwrap().to_string()
    };
    let p: f64 = value(&["theory", "power_spherical", "--n", "64", "--d", "64", "--psi", "1", "--alpha", "0.05"])
        .parse()
        .unwrap();
    assert!((p - 0.7987).abs() < 1e-4, "{p}");
    assert_eq!(value(&["theory", "snr_regime", "--n", "100", "--d", "100", "--psi", "1"]), "medium");
    let m: f64 = value(&["theory", "median_prediction", "--d", "100"]).parse().unwrap();
    assert!((m - 200.0).abs() < 1e-9);
    let out = stdout(&hdts(&["theory", "power_linear", "--n", "64", "--d", "64", "--psi", "1"], dir.path()));
    assert_eq!(out.lines().next().unwrap(), "formula,n,d,psi,alpha,value");
    assert_eq!(hdts(&["theory", "nonsense"], dir.path()).status.code(), Some(2));
    assert_eq!(hdts(&["theory", "power_spherical", "--n", "64"], dir.path()).status.code(), Some(2));
}

#[test]
fn verify_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let o = hdts(&["verify", "h2_identity", "--draws", "2000"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().next().unwrap(), VERIFY_HEADER);
    assert!(out.lines().skip(1).all(|l| l.ends_with(",true")));
    assert_eq!(hdts(&["verify", "nonsense"], dir.path()).status.code(), Some(2));
    let o = hdts(&["verify", "pairwise_moments", "--draws", "20000", "--seed", "3", "--out", "v"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(dir.path().join("v/verify_pairwise_moments.csv").exists());
    assert!(dir.path().join("v/verify_pairwise_moments.manifest").exists());
}

#[test]
fn experiment_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "experiment", "exp5_diag", "--grid", "12,20", "--reps", "5", "--seed", "2", "--calibration",
        "permutation:100", "--svg", "--out", "run",
    ];
    let o = hdts(&args, dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("run/exp5_diag.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), EXPERIMENT_HEADER);
    assert_eq!(
        EXPERIMENT_HEADER,
        "statistic,d,n,bandwidth_rule,budget,calibration,alpha,reps,power,stderr,master_seed"
    );
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert_eq!(rows.len(), 9 * 2);
    assert!(rows.iter().all(|r| r.len() == 11 && r[1] == "40"));
    assert_eq!(rows[0][0], "uMMD0.5");
    assert_eq!((rows[0][2], rows[1][2]), ("12", "20"));
    assert!(!csv.contains('\r'));

    let manifest = std::fs::read_to_string(dir.path().join("run/exp5_diag.manifest")).unwrap();
    for key in ["command_line = ", "master_seed = 2", "tool_version = ", "wall_time_seconds = ", "artifacts = "] {
        assert!(manifest.contains(key), "{key}");
    }

    let svg = std::fs::read_to_string(dir.path().join("run/exp5_diag.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    let root = doc.root_element();
    assert_eq!(root.tag_name().name(), "svg");
    assert_eq!(root.attribute("version"), Some("1.1"));
    let texts: Vec<&str> = doc.descendants().filter_map(|n| n.text()).collect();
    assert!(texts.contains(&"sample size"));
    assert!(texts.contains(&"power"));
    assert!(texts.contains(&"uMMD Median"));
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count(), 9);
}

#[test]
fn experiment_output_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_hdts"))
        .args(["experiment", "exp1_normal", "--grid", "8", "--reps", "2", "--statistics", "uCQ,ED", "--calibration", "permutation:100"])
        .current_dir(dir.path())
        .env("HDTS_OUT_DIR", "from_env")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("from_env/exp1_normal.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert_eq!(hdts(&["experiment", "exp3"], dir.path()).status.code(), Some(2));
}

#[test]
fn unwritable_output_directory_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "blocker", "");
    let o = hdts(&["experiment", "exp1_normal", "--grid", "8", "--reps", "2", "--out", "blocker/sub"], dir.path());
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    gaussian_files(dir.path(), 8, 24);
    let a = hdts(&["test", "x.txt", "y.txt", "--statistic", "ed", "--seed", "5"], dir.path());
    let b = hdts(&["test", "x.txt", "y.txt", "--statistic", "ed", "--seed", "5"], dir.path());
    assert_eq!(a.stdout, b.stdout);
    let first = std::fs::read(dir.path().join("x.txt")).unwrap();
    hdts(&["sample", "--config", "p.toml", "--n", "24", "--seed", "1", "--out", "x2.txt"], dir.path());
    assert_eq!(first, std::fs::read(dir.path().join("x2.txt")).unwrap());
}
