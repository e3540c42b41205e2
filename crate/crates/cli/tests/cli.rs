use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn coopcheck(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_coopcheck")).args(args).output().expect("run coopcheck")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

/// Writes a benchmark instance into its own directory.
fn corpus(benchmark: &str, name: &str) -> PathBuf {
    let dir = scratch(name);
    let src = dir.join("src");
    let o = coopcheck(&["corpus", benchmark, "-o", src.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("root APPLICATION.make"));
    src
}

fn verify(src: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["verify", src.to_str().unwrap(), "--root", "APPLICATION.make"];
    args.extend_from_slice(extra);
    coopcheck(&args)
}

#[test]
fn deadlock_is_reported_with_a_trace() {
    let src = corpus("DP(2,1,bad_eat)", "bad_eat");
    let trace = src.parent().unwrap().join("trace.jsonl");
    let o = verify(&src, &["--trace", trace.to_str().unwrap()]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(1), "{out}");
    assert!(out.contains("deadlock: REACHABLE"), "{out}");
    assert!(out.contains("counterexample:"), "{out}");
    let text = std::fs::read_to_string(&trace).unwrap();
    let steps: Vec<serde_json::Value> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert!(!steps.is_empty());
    for (i, s) in steps.iter().enumerate() {
        assert_eq!(s["step"], i + 1);
        assert!(s["rule"].is_string() && s["proc"].is_u64() && s["desc"].is_string(), "{s}");
    }
}

#[test]
fn deadlock_freedom_exits_zero() {
    let src = corpus("DP(2,1,eat)", "eat");
    let o = verify(&src, &[]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert!(out.contains("deadlock: UNREACHABLE (full exploration)"), "{out}");
    assert!(out.contains("0 stuck, 0 error"), "{out}");
}

#[test]
fn counterexample_mode_finds_the_deadlock() {
    let src = corpus("DP(2,1,bad_eat)", "bad_eat_search");
    let o = verify(&src, &["--mode", "counterexample", "--check", "deadlock", "--strategy", "dfs"]);
    assert_eq!(o.status.code(), Some(1), "{}", stdout(&o));
    assert!(stdout(&o).contains("deadlock: REACHABLE"));
}

#[test]
fn bounded_runs_exit_two() {
    let src = corpus("DP(2,1,eat)", "bounded");
    let o = verify(&src, &["--bound", "10"]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(2), "{out}");
    assert!(out.contains("UNKNOWN (bounded at"), "{out}");
}

#[test]
fn postcondition_checks_can_be_disabled() {
    let src = corpus("DP(2,1,eat,broken_post)", "broken_post");
    let on = verify(&src, &["--check", "postcondition"]);
    assert_eq!(on.status.code(), Some(1));
    assert!(stdout(&on).contains("postcondition_fail: REACHABLE"));
    let off = verify(&src, &["--check", "postcondition", "--no-postconditions"]);
    assert_eq!(off.status.code(), Some(0), "{}", stdout(&off));
    assert!(stdout(&off).contains("postcondition_fail: UNREACHABLE"));
}

#[test]
fn unrequested_classes_do_not_fail_the_run() {
    let src = corpus("DP(2,1,eat,zero_id)", "zero_id");
    let o = verify(&src, &["--check", "deadlock"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("precondition_fail: REACHABLE"));
}

#[test]
fn input_errors_exit_three() {
    let src = corpus("DP(2,1,eat)", "bad_root");
    let valid = verify(&src, &[]);
    assert_eq!(valid.status.code(), Some(0));
    let bad_root = coopcheck(&["verify", src.to_str().unwrap(), "--root", "NOWHERE.make"]);
    assert_eq!(bad_root.status.code(), Some(3));
    let zero_bound = verify(&src, &["--bound", "0"]);
    assert_eq!(zero_bound.status.code(), Some(3));
    let unknown_check = verify(&src, &["--check", "liveness"]);
    assert_eq!(unknown_check.status.code(), Some(3));

    let broken = scratch("syntax");
    std::fs::write(broken.join("application.e"), "class APPLICATION create make feature make do x := end end").unwrap();
    let o = verify(&broken, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(!o.stderr.is_empty());
}

#[test]
fn reports_are_identical_across_runs() {
    let src = corpus("DS(1,2,1,bad)", "report");
    let dir = src.parent().unwrap();
    let (a, b) = (dir.join("a.json"), dir.join("b.json"));
    for path in [&a, &b] {
        let o = verify(&src, &["--report", path.to_str().unwrap(), "--jobs", "2"]);
        assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    }
    let (ja, jb) = (std::fs::read_to_string(&a).unwrap(), std::fs::read_to_string(&b).unwrap());
    assert_eq!(ja, jb);
    let report: serde_json::Value = serde_json::from_str(&ja).unwrap();
    assert_eq!(report["verdicts"]["deadlock"]["status"], "unreachable", "{report}");
    assert!(report["stats"]["states"].as_u64().unwrap() > 0);
}

#[test]
fn model_dump_lists_the_classes() {
    let src = corpus("DP(2,1,eat)", "dump");
    let model = src.parent().unwrap().join("model.txt");
    let o = verify(&src, &["--emit-model", model.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&model).unwrap();
    for class in ["APPLICATION", "PHILOSOPHER", "FORK"] {
        assert!(text.contains(class), "{class} missing from the model dump");
    }
}

#[test]
fn quick_suite_passes() {
    let o = coopcheck(&["suite", "--quick", "DP(2,1,eat)", "DP(2,1,bad_eat)", "SEPC(5)"]);
    let out = stdout(&o);
    assert_eq!(o.status.code(), Some(0), "{out}");
    assert_eq!(out.lines().filter(|l| l.starts_with("PASS")).count(), 3, "{out}");
}

#[test]
fn unknown_benchmarks_are_input_errors() {
    let dir = scratch("unknown");
    let o = coopcheck(&["corpus", "XYZ(1)", "-o", dir.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}
