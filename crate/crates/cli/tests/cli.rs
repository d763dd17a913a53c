use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_bssmf"));
    c.env_remove("RUST_LOG").env_remove("BSSMF_THREADS");
    c
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn factorize_recovers_example_w() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = format!("{}/", dir.path().display());
    let x = fixture("example1_x.csv");
    let o = run(&[
        "factorize",
        "--input",
        path_str(&x),
        "--rank",
        "3",
        "--bounds",
        "0:3",
        "--seed-sweep",
        "50",
        "--out-prefix",
        &prefix,
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o).lines().nth(1).unwrap().to_string();
    let rel: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
    assert!(rel < 1e-6, "{line}");
    for f in ["W.csv", "H.csv", "trace.csv", "meta.json"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let trace = std::fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,objective,L_W,L_H\n"));

    let w = dir.path().join("W.csv");
    let m = run(&[
        "mrsa",
        "--true",
        path_str(&fixture("example1_w.csv")),
        "--est",
        path_str(&w),
    ]);
    assert!(m.status.success());
    let mean: f64 = stdout(&m)
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse::<f64>().unwrap())
        .sum::<f64>()
        / 3.0;
    assert!(mean < 0.5, "{}", stdout(&m));
}

#[test]
fn factorize_output_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let x = fixture("example1_x_printed.csv");
    let mut outputs = Vec::new();
    for (k, threads) in ["1", "2"].iter().enumerate() {
        let prefix = format!("{}/run{k}_", dir.path().display());
        let o = bin()
            .env("BSSMF_THREADS", threads)
            .args([
                "factorize",
                "--input",
                path_str(&x),
                "--rank",
                "3",
                "--bounds",
                "infer",
                "--seed",
                "4",
            ])
            .args(["--outer", "50", "--out-prefix", &prefix])
            .output()
            .unwrap();
        assert!(o.status.success());
        let files: Vec<Vec<u8>> = ["W.csv", "H.csv", "trace.csv", "meta.json"]
            .iter()
            .map(|f| std::fs::read(format!("{prefix}{f}")).unwrap())
            .collect();
        outputs.push((stdout(&o), files));
    }
    assert_eq!(outputs[0], outputs[1]);
}

#[test]
fn check_ssc_exit_codes() {
    let pass = run(&[
        "check-ssc",
        "--factor",
        path_str(&fixture("example1_h_3a13.csv")),
    ]);
    assert_eq!(pass.status.code(), Some(0));
    assert!(stdout(&pass).starts_with("row,zero_count,zero_set_rank,passes\n"));

    let fail = run(&["check-ssc", "--factor", path_str(&fixture("dense_h.csv"))]);
    assert_eq!(fail.status.code(), Some(10));

    let stacked = run(&[
        "check-ssc",
        "--factor",
        path_str(&fixture("example1_w.csv")),
        "--role",
        "w-stacked",
        "--bounds",
        "0:3",
    ]);
    assert_eq!(stacked.status.code(), Some(0));
}

#[test]
fn mrsa_is_permutation_invariant() {
    let dir = tempfile::tempdir().unwrap();
    // Columns of the example W in the order (2, 0, 1).
    let permuted = dir.path().join("p.csv");
    std::fs::write(&permuted, "0,2,3\n0,3,2\n2,3,0\n3,2,0\n3,0,2\n2,0,3\n").unwrap();
    let o = run(&[
        "mrsa",
        "--true",
        path_str(&fixture("example1_w.csv")),
        "--est",
        path_str(&permuted),
    ]);
    assert!(o.status.success());
    let text = stdout(&o);
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect())
        .collect();
    assert_eq!(rows.len(), 4, "{text}");
    assert_eq!(rows[3][0], "mean");
    let matched: Vec<&str> = rows[..3].iter().map(|r| r[1]).collect();
    assert_eq!(matched, ["1", "2", "0"]);
    for r in &rows {
        assert!(r[2].parse::<f64>().unwrap().abs() < 1e-9, "{text}");
    }
}

#[test]
fn synth_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut files = Vec::new();
    for k in 0..2 {
        let prefix = format!("{}/s{k}_", dir.path().display());
        let o = run(&[
            "synth",
            "--m",
            "30",
            "--n",
            "40",
            "--rank",
            "4",
            "--p01",
            "0.2",
            "--seed",
            "9",
            "--out-prefix",
            &prefix,
        ]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        files.push(
            ["X.csv", "Wtrue.csv", "Htrue.csv"]
                .iter()
                .map(|f| std::fs::read(format!("{prefix}{f}")).unwrap())
                .collect::<Vec<_>>(),
        );
    }
    assert_eq!(files[0], files[1]);
}

#[test]
fn synth_gives_up_when_h_cannot_pass() {
    let dir = tempfile::tempdir().unwrap();
    let prefix = format!("{}/s_", dir.path().display());
    // Without zeros no row of H has r − 1 zeros.
    let o = run(&[
        "synth",
        "--m",
        "20",
        "--n",
        "20",
        "--rank",
        "4",
        "--h-zeros",
        "0",
        "--out-prefix",
        &prefix,
    ]);
    assert_eq!(o.status.code(), Some(11));
}

#[test]
fn center_demo_writes_six_series() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("demo.csv");
    let o = run(&[
        "center-demo",
        "--input",
        path_str(&fixture("example1_x_printed.csv")),
        "--rank",
        "3",
        "--outer",
        "20",
        "--inner",
        "2",
        "--seeds",
        "2",
        "--out",
        path_str(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(&out).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap().split(',').count(), 7);
    assert_eq!(lines.count(), 21);
}

#[test]
fn eval_scores_saved_factors() {
    let dir = tempfile::tempdir().unwrap();
    let mtx = dir.path().join("x.mtx");
    // W·H with W = example W and H = e1: the cells equal W's first column.
    std::fs::write(
        &mtx,
        "%%MatrixMarket matrix coordinate real general\n6 1 3\n1 1 2\n2 1 3\n5 1 0\n",
    )
    .unwrap();
    let h = dir.path().join("h.csv");
    std::fs::write(&h, "1\n0\n0\n").unwrap();
    let o = run(&[
        "eval",
        "--w",
        path_str(&fixture("example1_w.csv")),
        "--h",
        path_str(&h),
        "--input",
        path_str(&mtx),
        "--bounds",
        "0:3",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let line = stdout(&o).lines().nth(1).unwrap().to_string();
    let (cells, rmse) = line.split_once(',').unwrap();
    assert_eq!(cells, "3");
    assert_eq!(rmse.parse::<f64>().unwrap(), 0.0);
}

#[test]
fn bad_input_exit_codes() {
    let missing = run(&["factorize", "--input", "/nonexistent/x.csv", "--rank", "2"]);
    assert_eq!(missing.status.code(), Some(3));

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "1,2\n3,oops\n").unwrap();
    let parse = run(&["factorize", "--input", path_str(&bad), "--rank", "1"]);
    assert_eq!(parse.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&parse.stderr).contains("bad.csv:2"));

    let rank = run(&[
        "factorize",
        "--input",
        path_str(&fixture("example1_x.csv")),
        "--rank",
        "9",
    ]);
    assert_eq!(rank.status.code(), Some(2));

    let variant = run(&[
        "factorize",
        "--input",
        path_str(&fixture("example1_x.csv")),
        "--rank",
        "2",
        "--variant",
        "ssmf",
    ]);
    assert_eq!(variant.status.code(), Some(2));

    let usage = run(&["factorize"]);
    assert_eq!(usage.status.code(), Some(2));
}
