use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const RECT_TOML: &str = include_str!("../../core/config/rect.toml");

fn tacfuse<S: AsRef<std::ffi::OsStr>>(args: &[S]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tacfuse")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn ok(o: Output) -> Output {
    assert_eq!(code(&o), 0, "stderr: {}", String::from_utf8_lossy(&o.stderr));
    o
}

fn p(path: &Path) -> String {
    path.to_str().unwrap().to_string()
}

/// Small classifier budget so training stays quick in debug builds.
fn small_config(dir: &Path) -> PathBuf {
    let path = dir.join("rect.toml");
    let text = format!("{RECT_TOML}\n[classifier]\nmax_train_samples = 1500\nfolds = 3\n");
    fs::write(&path, text).unwrap();
    path
}

fn simulate(dir: &Path, name: &str, seed: u64) -> PathBuf {
    let out = dir.join(name);
    ok(tacfuse(&["simulate", "--kind", "test", "--object", "rect", "--out", &p(&out), "--seed", &seed.to_string()]));
    out
}

#[test]
fn simulate_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let a = simulate(dir.path(), "a.jsonl", 3);
    let b = simulate(dir.path(), "b.jsonl", 3);
    let c = simulate(dir.path(), "c.jsonl", 4);
    let (a, b, c) = (fs::read(a).unwrap(), fs::read(b).unwrap(), fs::read(c).unwrap());
    assert_eq!(a, b);
    assert_ne!(a, c);
    let header: serde_json::Value = serde_json::from_slice(a.split(|&x| x == b'\n').next().unwrap()).unwrap();
    assert_eq!(header["trials"], 25);
    assert_eq!(header["kind"], "test");
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let data = simulate(dir.path(), "d.jsonl", 0);
    let model = p(&dir.path().join("m.json"));
    assert_eq!(code(&tacfuse::<&str>(&[])), 1);
    assert_eq!(code(&tacfuse(&["simulate", "--kind", "sideways", "--out", "x.jsonl"])), 1);
    assert_eq!(code(&tacfuse(&["train-cf", "--data", &p(&data), "--folds", "1", "--out-model", &model])), 1);
    assert_eq!(code(&tacfuse(&["train-cf", "--data", &p(&data), "--grid", "1,2", "--out-model", &model])), 1);
    assert_eq!(code(&tacfuse(&["estimate", "--data", &p(&data), "--mode", "full", "--out", "e.jsonl"])), 1);
    assert_eq!(code(&tacfuse(&["estimate", "--data", &p(&data), "--oracle-cf", "--mode", "psychic", "--out", "e.jsonl"])), 1);
    assert_eq!(code(&tacfuse(&["report", "--out-dir", &p(dir.path())])), 1);
    assert!(!Path::new(&model).exists());
    assert_eq!(code(&tacfuse(&["--help"])), 0);
}

#[test]
fn bad_inputs_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let missing = p(&dir.path().join("nothere.jsonl"));
    let out = tacfuse(&["estimate", "--data", &missing, "--oracle-cf", "--mode", "full", "--out", &p(&dir.path().join("e.jsonl"))]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("nothere.jsonl"));

    let garbage = dir.path().join("garbage.jsonl");
    fs::write(&garbage, "{\"schema_version\": 1}\nnot json\n").unwrap();
    let out = tacfuse(&["estimate", "--data", &p(&garbage), "--oracle-cf", "--mode", "full", "--out", &p(&dir.path().join("e.jsonl"))]);
    assert_eq!(code(&out), 2);

    let bad_config = dir.path().join("bad.toml");
    fs::write(&bad_config, "[simulator]\nno_such_key = 1\n").unwrap();
    let out = tacfuse(&["simulate", "--kind", "test", "--config", &p(&bad_config), "--out", &p(&dir.path().join("s.jsonl"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn train_estimate_report_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = small_config(d);
    let data = simulate(d, "test.jsonl", 1);
    let model = d.join("model.json");
    ok(tacfuse(&[
        "train-cf", "--data", &p(&data), "--config", &p(&config), "--grid", "10:1", "--out-model", &p(&model),
    ]));
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(d.join("model.summary.json")).unwrap()).unwrap();
    assert_eq!(summary["geometry"], "rect");
    assert_eq!(summary["c"], 10.0);

    let mut estimates = Vec::new();
    for mode in ["vision", "vision+robot", "vision+contact", "full"] {
        let out = d.join(format!("est-{}.jsonl", mode.replace('+', "-")));
        ok(tacfuse(&["estimate", "--data", &p(&data), "--model", &p(&model), "--mode", mode, "--out", &p(&out)]));
        assert!(out.with_extension("timing.json").exists());
        estimates.push(out);
    }
    let bodies: Vec<Vec<u8>> = estimates.iter().map(|e| fs::read(e).unwrap()).collect();
    for i in 0..bodies.len() {
        for j in i + 1..bodies.len() {
            assert_ne!(bodies[i], bodies[j]);
        }
    }

    let report = |out: &Path| {
        let mut args = vec!["report".to_string(), "--estimates".into()];
        args.extend(estimates.iter().map(|e| p(e)));
        args.extend(["--truth".into(), p(&data), "--classifier".into(), p(&d.join("model.summary.json"))]);
        args.extend(["--out-dir".into(), p(out)]);
        ok(tacfuse(&args));
    };
    let (r1, r2) = (d.join("r1"), d.join("r2"));
    report(&r1);
    report(&r2);
    for name in ["table2.csv", "table3.csv", "confusion.csv", "summary.md"] {
        let a = fs::read(r1.join(name)).unwrap_or_else(|_| panic!("{name} written"));
        assert_eq!(a, fs::read(r2.join(name)).unwrap(), "{name} differs between runs");
    }
    assert!(r1.join("runtime.json").exists());

    let table = fs::read_to_string(r1.join("table2.csv")).unwrap();
    let rows: Vec<&str> = table.lines().collect();
    assert_eq!(rows.len(), 5);
    assert!(rows.iter().all(|r| r.split(',').count() == 5));
    let modes: Vec<&str> = rows[1..].iter().map(|r| r.split(',').next().unwrap()).collect();
    assert_eq!(modes, ["vision", "vision+robot", "vision+contact", "full"]);

    // the same mode twice cannot be reported
    let out = tacfuse(&[
        "report", "--estimates", &p(&estimates[0]), &p(&estimates[0]), "--truth", &p(&data), "--out-dir", &p(&d.join("r3")),
    ]);
    assert_eq!(code(&out), 1);
}
