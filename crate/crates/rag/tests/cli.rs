//! End-to-end behaviour of the `bee` binary.

use std::path::Path;
use std::process::{Command, Output};

use bee_rag::output::{read_comments, read_table};

fn bee(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bee"))
        .current_dir(dir)
        .env_remove("BEE_SCORER_ENDPOINT")
        .args(args)
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("c.cfg"), "mu=0.5\nn-grid=16,32\n# a comment\n").unwrap();
    let o = bee(dir.path(), &["--config", "c.cfg", "solve-sigma", "--mu", "0.1", "--out", "s.csv"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let text = read(dir.path(), "s.csv");
    assert!(text.contains("# mu=0.1\n"));
    assert!(text.contains("# n-grid=16,32\n"));
    let (_, rows) = read_table(&dir.path().join("s.csv")).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[1] == "0.1"));
}

#[test]
fn header_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 3] = [
        &["entropy-sim", "--n-grid", "64,128", "--solve", "--trials", "50", "--seed", "3", "--out", "a.csv"],
        &["bench", "--docs-grid", "4,8", "--trials", "4", "--out", "a.csv"],
        &["train", "--synthetic", "6", "--steps", "7", "--lr", "0.001", "--out", "a.csv"],
    ];
    for args in runs {
        assert_eq!(code(&bee(dir.path(), args)), 0, "{args:?}");
        let first = read(dir.path(), "a.csv");
        std::fs::copy(dir.path().join("a.csv"), dir.path().join("a.cfg")).unwrap();
        assert_eq!(code(&bee(dir.path(), &["--config", "a.cfg", args[0]])), 0, "{args:?}");
        assert_eq!(read(dir.path(), "a.csv"), first, "{args:?}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    assert_eq!(code(&bee(p, &["mask-verify"])), 0);
    assert_eq!(code(&bee(p, &["mask-verify", "--corrupt"])), 2);
    assert_eq!(code(&bee(p, &["--config", "missing.cfg", "solve-sigma"])), 1);
    assert_eq!(code(&bee(p, &["solve-sigma", "--mu", "abc"])), 1);
    assert_eq!(code(&bee(p, &["score", "--query", "q", "--docs", "nope.txt"])), 1);
    assert_eq!(code(&bee(p, &["train", "--synthetic", "8", "--scale", "100", "--tau", "none"])), 3);
    let footer = read_comments(&p.join("projection-log.csv")).unwrap();
    assert!(footer.iter().any(|(k, _)| k == "diverged_at_step"), "{footer:?}");
}

#[test]
fn remote_scorer_needs_an_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("d.txt"), "one\ntwo\n").unwrap();
    let o = bee(dir.path(), &["score", "--query", "q", "--docs", "d.txt", "--scorer", "remote"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn endpoint_from_config_is_not_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    // nothing listens here, so the run fails after resolving its configuration
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    std::fs::write(p.join("c.cfg"), format!("endpoint=http://127.0.0.1:{port}/secret\n")).unwrap();
    std::fs::write(p.join("d.txt"), "one\n").unwrap();
    let o = bee(p, &["--config", "c.cfg", "score", "--query", "q", "--docs", "d.txt", "--scorer", "remote"]);
    assert_eq!(code(&o), 1);
    assert!(!String::from_utf8_lossy(&o.stdout).contains("secret"));
    // the lexical path still writes a header without the endpoint key
    assert_eq!(code(&bee(p, &["--config", "c.cfg", "score", "--query", "one", "--docs", "d.txt"])), 0);
    assert!(!read(p, "scores.csv").contains("secret"));
}

#[test]
fn zero_learning_rate_keeps_the_loss() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&bee(dir.path(), &["train", "--synthetic", "10", "--lr", "0", "--steps", "20"])), 0);
    let (_, rows) = read_table(&dir.path().join("projection-log.csv")).unwrap();
    assert_eq!(rows.len(), 20);
    assert!(rows.iter().all(|r| r[1] == rows[0][1]));
}

#[test]
fn bench_default_shape() {
    let dir = tempfile::tempdir().unwrap();
    let o = bee(dir.path(), &["bench", "--trials", "2", "--svg", "fig"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let (cols, rows) = read_table(&dir.path().join("bench.csv")).unwrap();
    assert_eq!(rows.len(), 9);
    let n = cols.iter().position(|c| c == "n_docs").unwrap();
    let v = cols.iter().position(|c| c == "variant").unwrap();
    for docs in ["4", "16", "64"] {
        let mut seen: Vec<&str> = rows.iter().filter(|r| r[n] == docs).map(|r| r[v].as_str()).collect();
        seen.sort();
        assert_eq!(seen, ["bee-gold", "bee-scored", "vanilla"]);
    }
    for f in ["fig-entropy.svg", "fig-gold-mass.svg"] {
        assert!(read(dir.path(), f).starts_with("<svg"));
    }
}
