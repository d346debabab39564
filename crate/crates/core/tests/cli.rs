use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use robust_spc::chart::{limits_for_alpha, signal_probability, LimitScheme};
use robust_spc::rng::{substream, Role};

const SMALL: [&str; 8] = [
    "--replicates",
    "300",
    "--calibration-replicates",
    "500",
    "--correction-replicates",
    "2000",
    "--k",
    "20",
];

fn spc(args: &[&str], cache: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spc"))
        .args(args)
        .env("SPC_CACHE_DIR", cache)
        .output()
        .expect("spawn spc")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_subgroups(path: &Path, rows: &[Vec<f64>]) {
    let n = rows[0].len();
    let mut s: String = (1..=n).map(|j| format!("x{j}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.iter().map(f64::to_string).collect::<Vec<_>>().join(","));
        s.push('\n');
    }
    fs::write(path, s).unwrap();
}

fn normal_rows(k: usize, n: usize, sd: f64, seed: u64) -> Vec<Vec<f64>> {
    (0..k)
        .map(|i| {
            let mut s = substream(seed, i as u64, Role::Phase2);
            (0..n).map(|_| sd * s.standard_normal()).collect()
        })
        .collect()
}

fn data_lines(path: &Path) -> Vec<String> {
    fs::read_to_string(path).unwrap().lines().filter(|l| !l.starts_with('#')).map(String::from).collect()
}

fn header_value(path: &Path, key: &str) -> f64 {
    let prefix = format!("# {key} = ");
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .find_map(|l| l.strip_prefix(&prefix).map(|v| v.parse().unwrap()))
        .unwrap_or_else(|| panic!("{key} missing"))
}

#[test]
fn usage_errors_list_every_problem_and_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = spc(&["arl", "--model", "m2", "--a", "2.5", "--n", "1", "--scale", "iqr"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("integer") && err.contains("n = 1") && err.contains("iqr"), "{err}");

    assert_eq!(spc(&["mse", "--a", "1:0:4"], dir.path()).status.code(), Some(2));
    assert_eq!(spc(&["frobnicate"], dir.path()).status.code(), Some(2));
    assert_eq!(spc(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn unreachable_target_is_a_calibration_failure() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let mut args = vec!["calibrate", "--scale", "sd", "--loc", "mean", "--target-arl0", "1e12", "--out"];
    args.push(out.to_str().unwrap());
    args.extend_from_slice(&SMALL);
    let o = spc(&args, dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("achievable range"));
}

#[test]
fn chart_limits_and_phase2_flags() {
    let dir = tempfile::tempdir().unwrap();
    let p1 = dir.path().join("phase1.csv");
    let p2 = dir.path().join("phase2.csv");
    let out = dir.path().join("out");
    write_subgroups(&p1, &normal_rows(50, 5, 1.0, 1));
    write_subgroups(&p2, &normal_rows(2000, 5, 3.0, 2));
    let o = spc(
        &[
            "chart",
            "--phase1",
            p1.to_str().unwrap(),
            "--phase2",
            p2.to_str().unwrap(),
            "--scale",
            "mad",
            "--loc",
            "hd",
            "--calibration-replicates",
            "2000",
            "--correction-replicates",
            "20000",
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let limits_path = out.join("limits.csv");
    let lines = data_lines(&limits_path);
    assert_eq!(lines[0], "center,lcl,ucl");
    let v: Vec<f64> = lines[1].split(',').map(|x| x.parse().unwrap()).collect();
    assert!(0.0 <= v[1] && v[1] < v[0] && v[0] < v[2]);
    let alpha = header_value(&limits_path, "alpha_star");
    assert!(alpha > 0.0 && alpha < 0.0027);

    // the observed signal rate matches the exact probability at phi = 3
    let limits = limits_for_alpha(v[0], 5, alpha, LimitScheme::ArlUnbiased).unwrap();
    let p = signal_probability(&limits, 1.0, 3.0).unwrap().get();
    let rows = data_lines(&out.join("phase2.csv"));
    assert_eq!(rows[0], "subgroup,sd,signal");
    let outs = rows[1..].iter().filter(|r| r.ends_with(",out")).count() as f64;
    let rate = outs / 2000.0;
    assert!((rate - p).abs() < 4.0 * (p * (1.0 - p) / 2000.0).sqrt(), "rate {rate} vs p {p}");
}

#[test]
fn chart_data_errors_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let run = |content: &str, extra: &[&str]| {
        let p = dir.path().join("bad.csv");
        fs::write(&p, content).unwrap();
        let mut args = vec!["chart", "--phase1", p.to_str().unwrap(), "--out", out.to_str().unwrap()];
        args.extend_from_slice(extra);
        spc(&args, dir.path())
    };
    let ragged = run("a,b,c\n1,2,3\n4,5\n", &[]);
    assert_eq!(ragged.status.code(), Some(3), "{}", stderr(&ragged));
    let text = run("a,b\n1,2\n3,oops\n", &[]);
    assert_eq!(text.status.code(), Some(3));
    assert!(stderr(&text).contains("oops"));
    let mismatch = run("a,b,c\n1,2,3\n4,5,7\n", &["--n", "5"]);
    assert_eq!(mismatch.status.code(), Some(3));
    let missing = spc(&["chart", "--phase1", "/nonexistent/file.csv", "--out", out.to_str().unwrap()], dir.path());
    assert_eq!(missing.status.code(), Some(3));
}

#[test]
fn calibrate_warms_the_cache_once() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    let out = dir.path().join("out");
    let mut args = vec!["calibrate", "--scale", "sd,qn", "--loc", "mean,hd", "--cache-dir"];
    args.push(cache.to_str().unwrap());
    args.extend_from_slice(&["--out", out.to_str().unwrap()]);
    args.extend_from_slice(&SMALL);
    assert_eq!(spc(&args, dir.path()).status.code(), Some(0));
    let store = cache.join("calibrations.jsonl");
    let first = fs::read_to_string(&store).unwrap();
    assert_eq!(first.lines().count(), 2 + 4);
    let table_1 = fs::read_to_string(out.join("calibration.csv")).unwrap();

    assert_eq!(spc(&args, dir.path()).status.code(), Some(0));
    assert_eq!(fs::read_to_string(&store).unwrap(), first);
    assert_eq!(fs::read_to_string(out.join("calibration.csv")).unwrap(), table_1);

    // deleting the cache reproduces the same constants
    fs::remove_dir_all(&cache).unwrap();
    assert_eq!(spc(&args, dir.path()).status.code(), Some(0));
    assert_eq!(fs::read_to_string(out.join("calibration.csv")).unwrap(), table_1);
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("study.conf");
    fs::write(&conf, "model = m1\na = 1,3\nscale = sd,mad\nloc = mean\nk = 30\nreplicates = 200\n").unwrap();
    let out = dir.path().join("out");
    let o = spc(
        &[
            "mse",
            "--config",
            conf.to_str().unwrap(),
            "--k",
            "25",
            "--correction-replicates",
            "1000",
            "--out",
            out.to_str().unwrap(),
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = out.join("mse.csv");
    assert_eq!(header_value(&csv, "k"), 25.0);
    assert_eq!(header_value(&csv, "replicates"), 200.0);
    assert_eq!(data_lines(&csv).len(), 1 + 2 * 2);
}

fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = vec![];
    for entry in walk(dir) {
        files.push((entry.strip_prefix(dir).unwrap().display().to_string(), fs::read(&entry).unwrap()));
    }
    files.sort();
    files
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = vec![];
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out
}

#[test]
fn reproduce_is_byte_identical_across_runs_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let mut snaps = vec![];
    for (i, threads) in ["1", "4", "1"].iter().enumerate() {
        let out = dir.path().join(format!("out{i}"));
        // a fresh cache each time so calibration is redone too
        let cache = dir.path().join(format!("cache{i}"));
        let mut args = vec!["reproduce", "--threads", threads, "--out", out.to_str().unwrap()];
        args.extend_from_slice(&["--cache-dir", cache.to_str().unwrap()]);
        args.extend_from_slice(&SMALL);
        let o = spc(&args, dir.path());
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        snaps.push(snapshot(&out));
    }
    assert_eq!(snaps[0], snaps[1]);
    assert_eq!(snaps[0], snaps[2]);
    let names: Vec<&str> = snaps[0].iter().map(|(n, _)| n.as_str()).collect();
    assert!(names.contains(&"mse.csv") && names.contains(&"arl.csv") && names.contains(&"summary.txt"));
    assert_eq!(names.iter().filter(|n| n.starts_with("plots")).count(), 9 * 4);
}
