use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_tangle");

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("tangle-cli-{}-{name}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).env_remove("TANGLE_OUT_DIR").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

/// Every file carries the version and the same config hash; nothing temporary is left.
fn assert_headers(out: &Path) -> String {
    let mut hash = None;
    let mut files = 0;
    for entry in fs::read_dir(out).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        assert!(!name.starts_with('.') && !name.contains(".tmp"), "leftover {name}");
        let h = if name.ends_with(".json") {
            let v = json(&path);
            assert_eq!(v["meta"]["tool"], "tangle");
            assert_eq!(v["meta"]["version"], env!("CARGO_PKG_VERSION"));
            v["meta"]["config_sha256"].as_str().unwrap().to_string()
        } else {
            let text = fs::read_to_string(&path).unwrap();
            let first = text.lines().next().unwrap();
            let prefix = format!("# tangle {} config-sha256=", env!("CARGO_PKG_VERSION"));
            assert!(first.starts_with(&prefix), "{name}: {first}");
            first[prefix.len()..].to_string()
        };
        assert_eq!(h.len(), 64);
        assert_eq!(hash.get_or_insert(h.clone()), &h);
        files += 1;
    }
    assert!(files >= 2);
    hash.unwrap()
}

#[test]
fn full_escape_regime_is_reported() {
    let dir = scratch("escape");
    let o = run(&dir, &["escape-map", "a=0.2", "n=15", "theta_res=400", "z_res=400", "out_dir=out"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).starts_with("regime: full-escape"), "{}", stdout(&o));
    assert_headers(&dir.join("out"));
    let v = json(&dir.join("out/escape_map.json"));
    assert_eq!(v["escape_grid"]["survivors"], 0);
}

#[test]
fn sink_regime_has_exactly_one_sink() {
    let dir = scratch("sink");
    let o = run(&dir, &["fixed-points", "a=2", "m_min=0", "m_max=0", "out_dir=out"]);
    assert_eq!(code(&o), 0);
    assert_headers(&dir.join("out"));
    let v = json(&dir.join("out/fixed_points.json"));
    let kinds: Vec<&str> = v["fixed_points"].as_array().unwrap().iter().map(|r| r["kind"].as_str().unwrap()).collect();
    assert_eq!(kinds.iter().filter(|k| **k == "sink").count(), 1, "{kinds:?}");
}

#[test]
fn exit_codes() {
    let dir = scratch("codes");
    // escaping orbit: a negative finding with a report
    let o = run(&dir, &["orbit", "a=0.2", "n=50", "out_dir=neg"]);
    assert_eq!(code(&o), 1);
    assert!(dir.join("neg/orbit.json").exists());
    assert_eq!(code(&run(&dir, &["escape-map", "n=15", "foo=1"])), 2);
    assert_eq!(code(&run(&dir, &["escape-map", "n=not-a-number"])), 2);
    assert_eq!(code(&run(&dir, &["escape-map", "gamma=0.9", "out_dir=bad"])), 3);
    assert!(!dir.join("bad").exists());
    assert_eq!(code(&run(&dir, &["melnikov", "alpha=1", "beta=2", "out_dir=bad"])), 3);
}

#[test]
fn parse_errors_name_the_line() {
    let dir = scratch("lines");
    fs::write(dir.join("run.cfg"), "# comment\ncommand = escape-map\nbogus = 3\n").unwrap();
    let o = run(&dir, &["-c", "run.cfg"]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("run.cfg:3"), "{err}");
}

#[test]
fn flags_override_the_file_and_the_echo_reruns() {
    let dir = scratch("echo");
    fs::write(dir.join("run.cfg"), "command = fixed-points\na = 1.0\nout_dir = first\n").unwrap();
    let o = run(&dir, &["-c", "run.cfg", "a=2"]);
    assert_eq!(code(&o), 0);
    let h1 = assert_headers(&dir.join("first"));
    let echo = fs::read_to_string(dir.join("first/fixed_points.config")).unwrap();
    assert!(echo.lines().any(|l| l == "a = 2"), "{echo}");
    // the echo is itself a config; out_dir is not part of it or of the hash
    let o = run(&dir, &["-c", "first/fixed_points.config", "out_dir=second"]);
    assert_eq!(code(&o), 0);
    assert_eq!(assert_headers(&dir.join("second")), h1);
    assert_eq!(
        fs::read(dir.join("first/fixed_points.csv")).unwrap(),
        fs::read(dir.join("second/fixed_points.csv")).unwrap()
    );
}

#[test]
fn out_dir_from_the_environment() {
    let dir = scratch("env");
    let o = Command::new(BIN)
        .args(["lyapunov", "a=1.5", "n=2000", "seeds=100"])
        .current_dir(&dir)
        .env("TANGLE_OUT_DIR", dir.join("from-env"))
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(dir.join("from-env/lyapunov.json").exists());
}

#[test]
fn outputs_do_not_depend_on_thread_count() {
    let dir = scratch("threads");
    let runs: [&[&str]; 3] = [
        &["escape-map", "a=1.5", "n=20", "theta_res=200", "z_res=200"],
        &["attractor", "a=1.5", "seeds=400", "burn_in=200", "keep=20"],
        &["scan", "a=0", "b=1e-4", "d=200", "k=1e-6", "steps=12", "v_theta=200", "v_z=20", "vf=400"],
    ];
    for t in ["1", "8"] {
        for args in runs {
            let mut a: Vec<String> = args.iter().map(|s| s.to_string()).collect();
            a.push(format!("threads={t}"));
            a.push(format!("out_dir=t{t}"));
            let refs: Vec<&str> = a.iter().map(String::as_str).collect();
            assert_eq!(code(&run(&dir, &refs)), 0, "{args:?}");
        }
    }
    let mut names: Vec<_> = fs::read_dir(dir.join("t1")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert!(names.len() >= 9);
    for n in names {
        assert_eq!(fs::read(dir.join("t1").join(&n)).unwrap(), fs::read(dir.join("t8").join(&n)).unwrap(), "{n:?}");
    }
}
