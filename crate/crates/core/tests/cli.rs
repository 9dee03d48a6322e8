use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_systolic-sca"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("w1.txt"), "120\n73\n-96\n").unwrap();
    std::fs::write(
        dir.path().join("w.txt"),
        "23 120 -6\n-107 73 -31\n74 -96 17\n",
    )
    .unwrap();
    std::fs::write(dir.path().join("zero.txt"), "0\n0\n0\n").unwrap();
    dir
}

#[test]
fn conv_dims_prints_output_size() {
    let dir = setup();
    let o = bin(&["conv-dims", "32", "32", "5", "5", "1", "0"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "28 28\n");
    let o = bin(&["conv-dims", "32", "32", "4", "5", "3", "0"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn one_dimensional_attack_reports_rank_one_and_is_reproducible() {
    let dir = setup();
    let p = dir.path();
    let gen = bin(
        &[
            "gen-traces",
            "--rows",
            "3",
            "--cols",
            "1",
            "--batch",
            "3",
            "--weights",
            "w1.txt",
            "--n",
            "10000",
            "--seed",
            "5",
            "--sigma",
            "0",
            "--out",
            "t.sctr",
        ],
        p,
    );
    assert_eq!(
        gen.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&gen.stderr)
    );
    assert!(p.join("t.sctr.manifest").exists());

    let args = [
        "attack-1d",
        "--traces",
        "t.sctr",
        "--col",
        "1",
        "--k",
        "50",
        "--score",
        "signed",
        "--truth",
        "w1.txt",
        "--report",
        "r.csv",
    ];
    let o = bin(&args, p);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("weights (120, 73, -96) | rank 1 |"), "{out}");
    let first = std::fs::read(p.join("r.csv")).unwrap();
    assert_eq!(String::from_utf8_lossy(&first).lines().count(), 51);

    let again = bin(&args, p);
    assert_eq!(stdout(&again), out);
    assert_eq!(std::fs::read(p.join("r.csv")).unwrap(), first);

    let o = bin(
        &[
            "mtd-sweep",
            "--traces",
            "t.sctr",
            "--truth",
            "w1.txt",
            "--step",
            "2500",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("| MTD 2500"), "{}", stdout(&o));
}

#[test]
fn two_dimensional_attack_shows_the_column_pattern() {
    let dir = setup();
    let p = dir.path();
    let gen = bin(
        &[
            "gen-traces",
            "--rows",
            "3",
            "--cols",
            "3",
            "--weights",
            "w.txt",
            "--n",
            "50000",
            "--seed",
            "11",
            "--out",
            "t.sctr",
        ],
        p,
    );
    assert_eq!(gen.status.code(), Some(0));

    let o = bin(
        &[
            "attack-2d",
            "--traces",
            "t.sctr",
            "--truth",
            "w.txt",
            "--report",
            "r.csv",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(0));
    let lines: Vec<String> = stdout(&o).lines().map(String::from).collect();
    assert_eq!(lines.len(), 3);
    assert!(!lines[0].contains("| rank 1 |"), "{}", lines[0]);
    assert!(
        lines[1].contains("weights (120, 73, -96) | rank NA"),
        "{}",
        lines[1]
    );
    assert!(
        lines[2].contains("weights (-6, -31, 17) | rank 1 |"),
        "{}",
        lines[2]
    );

    let o = bin(
        &[
            "attack-multiphase",
            "--traces",
            "t.sctr",
            "--truth",
            "w.txt",
            "--profiler",
            "sim",
            "--phase-report",
            "phases",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        stdout(&o).matches("| rank 1 |").count(),
        3,
        "{}",
        stdout(&o)
    );
    let recovered = std::fs::read_to_string(p.join("phases/recovered_weights.txt")).unwrap();
    assert_eq!(
        recovered,
        std::fs::read_to_string(p.join("w.txt"))
            .unwrap()
            .replace(' ', ",")
    );
    assert!(p.join("phases/phase1_col3.csv").exists());

    // The same subtraction through a template file.
    let t = bin(
        &["template-gen", "--traces", "t.sctr", "--out", "zero.sctr"],
        p,
    );
    assert_eq!(t.status.code(), Some(0));
    let o = bin(
        &[
            "attack-2d",
            "--traces",
            "t.sctr",
            "--templates",
            "zero.sctr",
            "--col",
            "3",
            "--truth",
            "w.txt",
        ],
        p,
    );
    assert!(
        stdout(&o).contains("weights (-6, -31, 17) | rank 1 |"),
        "{}",
        stdout(&o)
    );
}

#[test]
fn degenerate_attack_exits_with_two() {
    let dir = setup();
    let p = dir.path();
    let gen = bin(
        &[
            "gen-traces",
            "--rows",
            "3",
            "--cols",
            "1",
            "--weights",
            "zero.txt",
            "--n",
            "200",
            "--alpha",
            "0",
            "--beta",
            "2",
            "--out",
            "z.sctr",
        ],
        p,
    );
    assert_eq!(gen.status.code(), Some(0));
    let o = bin(&["attack-1d", "--traces", "z.sctr"], p);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("degenerate"));
}

#[test]
fn usage_and_format_errors_exit_with_one() {
    let dir = setup();
    let p = dir.path();
    assert_eq!(
        bin(&["attack-1d", "--traces", "missing.sctr"], p)
            .status
            .code(),
        Some(1)
    );
    assert_eq!(bin(&["attack-1d", "--bogus"], p).status.code(), Some(1));
    assert_eq!(bin(&[], p).status.code(), Some(1));
    assert_eq!(bin(&["--help"], p).status.code(), Some(0));
    std::fs::write(p.join("junk.sctr"), b"not a trace file at all").unwrap();
    assert_eq!(
        bin(&["attack-1d", "--traces", "junk.sctr"], p)
            .status
            .code(),
        Some(1)
    );
    // Weight file shape differs from the array.
    let o = bin(
        &[
            "gen-traces",
            "--rows",
            "2",
            "--cols",
            "1",
            "--weights",
            "w1.txt",
            "--n",
            "5",
            "--out",
            "x.sctr",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(1));
    bin(
        &[
            "gen-traces",
            "--rows",
            "3",
            "--cols",
            "1",
            "--weights",
            "w1.txt",
            "--n",
            "50",
            "--out",
            "t.sctr",
        ],
        p,
    );
    let o = bin(&["attack-1d", "--traces", "t.sctr", "--truth", "w.txt"], p);
    assert_eq!(o.status.code(), Some(1));
    let o = bin(&["attack-1d", "--traces", "t.sctr", "--col", "2"], p);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn correlation_analyses_write_csv() {
    let dir = setup();
    let p = dir.path();
    let o = bin(
        &[
            "corr-analysis",
            "--mode",
            "pe-hd",
            "--weights",
            "w.txt",
            "--n",
            "2000",
            "--out",
            "pe.csv",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        std::fs::read_to_string(p.join("pe.csv"))
            .unwrap()
            .lines()
            .count(),
        10
    );
    let o = bin(
        &[
            "corr-analysis",
            "--mode",
            "aliasing",
            "--weights",
            "w1.txt",
            "--row",
            "2",
            "--n",
            "2000",
            "--out",
            "a.csv",
        ],
        p,
    );
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("median off-diagonal"));
    assert_eq!(
        std::fs::read_to_string(p.join("a.csv"))
            .unwrap()
            .lines()
            .count(),
        257
    );
}
