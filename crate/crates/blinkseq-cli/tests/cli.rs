use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_blinkseq"));
    c.env_remove("BLINKSEQ_SEED");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let o = run(args);
    assert!(o.status.success(), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> PathBuf {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn data_lines(text: &str) -> Vec<&str> {
    text.lines().filter(|l| !l.starts_with('#')).collect()
}

fn rows_in(dict_text: &str) -> usize {
    dict_text.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).count()
}

#[test]
fn gen_examples() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("d.txt");
    let o = ok(&["gen", "--coding", "nrz", "-L", "8", "--bbar", "0.1", "--n1", "6", "--n0", "4", "--hm", "3", "--out", s(&out)]);
    assert_eq!(rows_in(&fs::read_to_string(&out).unwrap()), 4);
    let note = stdout(&o);
    assert!(note.contains("sequences=4"), "{note}");
    assert!(note.contains("zeros=29"), "{note}");

    let o = ok(&["gen", "--coding", "manchester", "-L", "5", "--hm", "1"]);
    assert_eq!(rows_in(&stdout(&o)), 6);

    let o = ok(&["gen", "--coding", "nrz", "-L", "4", "--bbar", "1.0", "--n1", "4", "--n0", "4", "--hm", "1"]);
    let text = stdout(&o);
    assert_eq!(rows_in(&text), 1);
    assert!(text.lines().any(|l| l.trim() == "1111"));
}

#[test]
fn gen_seed_from_environment() {
    let args = ["gen", "-L", "12", "--bbar", "0.1", "--n1", "6", "--n0", "7", "--hm", "3", "--iterations", "50"];
    let a = bin().args(args).env("BLINKSEQ_SEED", "77").output().unwrap();
    let b = ok(&[&args[..], &["--seed", "77"]].concat());
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);
}

const REFERENCE_GRID: &str = "L,bbar,n1,n0
8,0.1,6,4
8,0.2,6,6
8,0.5,4,5
8,0.5,3,7
10,0.3,7,3
10,0.4,3,6
10,0.5,7,2
11,0.2,4,9
11,0.2,4,3
11,0.2,6,8
12,0.1,6,7
12,0.4,3,7
12,0.5,8,5
13,0.2,6,4
13,0.4,9,8
13,0.5,6,4
13,0.5,2,8
14,0.2,3,4
14,0.5,6,8
14,0.5,3,3
";

#[test]
fn table_reproduces_cardinality_columns() {
    let dir = TempDir::new().unwrap();
    let grid = write(&dir, "grid.csv", REFERENCE_GRID);
    let o = ok(&["table", "--grid", s(&grid), "--iterations", "2000"]);
    let text = stdout(&o);
    let lines = data_lines(&text);
    assert_eq!(lines[0], "L,bbar,n1,n0,D_exact,D_est,X_hm3,X_est");
    assert_eq!(lines.len(), 21);
    let d: Vec<u64> = lines[1..].iter().map(|l| l.split(',').nth(4).unwrap().parse().unwrap()).collect();
    assert_eq!(d, [29, 32, 18, 14, 72, 56, 42, 148, 97, 172, 326, 159, 210, 474, 443, 277, 24, 518, 649, 248]);
    let x_est: Vec<u64> = lines[1..].iter().map(|l| l.split(',').nth(7).unwrap().parse().unwrap()).collect();
    assert_eq!(x_est, [4, 4, 2, 2, 7, 6, 4, 13, 9, 15, 26, 13, 17, 34, 32, 20, 2, 35, 44, 17]);
    assert!(text.starts_with("# command=table\n"));
}

#[test]
fn table_single_row_and_empty_grid() {
    let dir = TempDir::new().unwrap();
    let one = write(&dir, "one.csv", "L,bbar,n1,n0\n10,0.5,7,2\n");
    let text = stdout(&ok(&["table", "--grid", s(&one), "--hm", "1"]));
    assert_eq!(data_lines(&text)[1], "10,0.5,7,2,42,41,42,4");
    let empty = write(&dir, "empty.csv", "L,bbar,n1,n0\n");
    let text = stdout(&ok(&["table", "--grid", s(&empty)]));
    assert_eq!(data_lines(&text), vec!["L,bbar,n1,n0,D_exact,D_est,X_hm3,X_est"]);
    let bad = write(&dir, "bad.csv", "L,bbar,n1,n0\n10,x,7,2\n");
    assert_eq!(run(&["table", "--grid", s(&bad)]).status.code(), Some(2));
    let wrong = write(&dir, "wrong.csv", "a,b\n1,2\n");
    assert_eq!(run(&["table", "--grid", s(&wrong)]).status.code(), Some(2));
}

const CASE_A: &str = "# case A
L=8
bbar=0.4
n1=7
n0=7
hm=1
p_b=0.01
delta=0
trials=100000
";

#[test]
fn simulate_case_a() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "a.cfg", CASE_A);
    let text = stdout(&ok(&["simulate", "--config", s(&cfg)]));
    let lines = data_lines(&text);
    assert_eq!(lines[0], "L,Hm,p_b,delta,trials,E_Td,se_Td,p_ce,se_pce,seed");
    let f: Vec<&str> = lines[1].split(',').collect();
    let td: f64 = f[5].parse().unwrap();
    let pce: f64 = f[7].parse().unwrap();
    assert!((td / 8.369 - 1.0).abs() < 0.02, "{td}");
    assert!((pce - 0.073).abs() < 0.01, "{pce}");
}

#[test]
fn outputs_identical_across_thread_counts_and_reruns() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "s.cfg", "L=13\nhm=3\nrows=22\np_b=0.1,0.01\ndelta=0.01,-0.01\ntrials=20000\n");
    let a = ok(&["--threads", "1", "simulate", "--config", s(&cfg)]).stdout;
    let b = ok(&["--threads", "6", "simulate", "--config", s(&cfg)]).stdout;
    let c = ok(&["simulate", "--config", s(&cfg)]).stdout;
    assert_eq!(a, b);
    assert_eq!(a, c);
    let cap = write(&dir, "c.cfg", "j_max=30\nmax_len=14\niterations=200\n");
    let a = ok(&["--threads", "1", "capacity", "--config", s(&cap)]).stdout;
    let b = ok(&["--threads", "5", "capacity", "--config", s(&cap)]).stdout;
    assert_eq!(a, b);
}

#[test]
fn csv_header_reruns_to_same_output() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "s.cfg", "L=8\nbbar=0.4\nn1=7\nn0=7\np_b=0.05\ntrials=5000\n");
    let first = ok(&["simulate", "--config", s(&cfg)]).stdout;
    let text = String::from_utf8(first.clone()).unwrap();
    let header: String = text.lines().filter(|l| l.starts_with('#')).map(|l| format!("{l}\n")).collect();
    assert!(header.contains("# seed="));
    let again = write(&dir, "again.cfg", &header);
    assert_eq!(ok(&["simulate", "--config", s(&again)]).stdout, first);
    // the whole CSV is also accepted as a config only through its header
    let whole = write(&dir, "whole.csv", &text);
    assert_eq!(run(&["simulate", "--config", s(&whole)]).status.code(), Some(2));
}

#[test]
fn simulate_seed_from_environment_is_recorded() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "s.cfg", "L=8\nbbar=0.4\nn1=7\nn0=7\np_b=0.05\ntrials=2000\n");
    let o = bin().args(["simulate", "--config", s(&cfg)]).env("BLINKSEQ_SEED", "4242").output().unwrap();
    assert!(o.status.success());
    assert!(String::from_utf8(o.stdout).unwrap().contains("# seed=4242\n"));
}

#[test]
fn capacity_curve_values() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "c.cfg", "p_g=0.999\nclock_quality=10000\nj_max=10\nmax_len=12\n");
    let o = ok(&["capacity", "--config", s(&cfg)]);
    let text = stdout(&o);
    let lines = data_lines(&text);
    assert_eq!(lines[0], "J,L_max,L_min_h1,L_min_h3");
    let f: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(f[0], "2");
    let lmax: f64 = f[1].parse().unwrap();
    assert!((lmax - 158.1).abs() < 0.05);
    assert_eq!(lines.len(), 10);
}

#[test]
fn trace_then_classify_noiseless() {
    let dir = TempDir::new().unwrap();
    let dict = dir.path().join("d.txt");
    ok(&["gen", "-L", "13", "--bbar", "0.5", "--n1", "6", "--n0", "4", "--hm", "3", "--out", s(&dict)]);
    let trace = dir.path().join("t.txt");
    ok(&["trace", "--dict", s(&dict), "--row", "3", "-n", "100", "--phase", "5", "--out", s(&trace)]);
    let log = stdout(&ok(&["classify", "--dict", s(&dict), "--trace", s(&trace)]));
    let lines = data_lines(&log);
    assert_eq!(lines[0], "k,decision,score");
    assert_eq!(lines.len(), 101);
    for (i, l) in lines[1..].iter().enumerate() {
        let d = l.split(',').nth(1).unwrap();
        assert_eq!(d, if i < 12 { "-2" } else { "3" }, "sample {}", i + 1);
    }
}

#[test]
fn classify_length_mismatch_is_an_error() {
    let dir = TempDir::new().unwrap();
    let d8 = dir.path().join("d8.txt");
    let d9 = dir.path().join("d9.txt");
    ok(&["gen", "-L", "8", "--out", s(&d8)]);
    ok(&["gen", "-L", "9", "--out", s(&d9)]);
    let trace = dir.path().join("t.txt");
    ok(&["trace", "--dict", s(&d8), "--out", s(&trace)]);
    let o = run(&["classify", "--dict", s(&d9), "--trace", s(&trace)]);
    assert_eq!(o.status.code(), Some(2));
    let missing = run(&["classify", "--dict", "/nonexistent/d", "--trace", s(&trace)]);
    assert_eq!(missing.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["gen", "--help"]).status.code(), Some(0));
    assert_eq!(run(&[]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["gen", "-L", "x"]).status.code(), Some(1));
    assert_eq!(run(&["gen", "--coding", "morse", "-L", "4"]).status.code(), Some(1));
    // parses, but fails validation
    assert_eq!(run(&["gen", "-L", "8", "--hm", "9"]).status.code(), Some(2));
    assert_eq!(run(&["gen", "-L", "8", "--bbar", "1.5"]).status.code(), Some(2));
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "bad.cfg", "L=8\nfoo=1\n");
    assert_eq!(run(&["simulate", "--config", s(&cfg)]).status.code(), Some(2));
    let other = write(&dir, "other.cfg", "command=capacity\n");
    assert_eq!(run(&["simulate", "--config", s(&other)]).status.code(), Some(2));
}
