use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use energy_orbit::cli::OUT_DIR_ENV;
use serde_json::Value;

const HARMONIC: &str = r#"
[potential]
name = "power_law"
a = 0.5
n_exp = 1
dim = 2

[energy]
h = 1.0

[solver]
K = 5
N = 48
starts = 4
"#;

const QUARTIC_SWEEP: &str = r#"
[potential]
name = "power_law"
a = 1.0
n_exp = 2
dim = 2

[energy]
list = [1.0, 3.0]

[solver]
K = 15
starts = 2
"#;

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_energy-orbit")).args(args).env_remove(OUT_DIR_ENV).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn solve_into(cfg: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["solve", "-c", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    run(&args)
}

fn summary(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn harmonic_solve_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", HARMONIC);
    let out = dir.path().join("out");
    let o = solve_into(&cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let s = summary(&out);
    let t = s["best"]["T"].as_f64().unwrap();
    assert!((t - 2.0 * PI).abs() <= 1e-6, "{t}");
    for key in ["config", "condition_report", "best", "diagnostics", "all_starts", "timestamp"] {
        assert!(s.get(key).is_some(), "missing {key}");
    }
    assert_eq!(s["all_starts"].as_array().unwrap().len(), 4);
    assert!(s["config"].get("output").is_none());
    let text = std::fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(text.contains(&format!("\"T\": {:.16e}", t)), "floats are not at 17 digits");
    let csv = std::fs::read_to_string(out.join("orbit.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,q1,q2,v1,v2"));
    assert_eq!(lines.count(), 512);
}

#[test]
fn unreachable_energy_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        "[potential]\nname = \"exp_well\"\ndim = 2\n[energy]\nh = 2.0\n[solver]\nK = 5\nstarts = 3\n",
    );
    let out = dir.path().join("out");
    let o = solve_into(&cfg, &out, &[]);
    assert_eq!(code(&o), 3, "{}", stderr(&o));
    let s = summary(&out);
    assert!(s["best"].is_null());
    for start in s["all_starts"].as_array().unwrap() {
        assert!(start["error"].as_str().unwrap().contains("root not bracketed"), "{start}");
    }
}

#[test]
fn configuration_errors_exit_one_and_name_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("[potential]\ndim = 2\n[energy]\nh = 1.0\n", "name"),
        (&format!("{HARMONIC}\n[output]\nbogus_flag = true\n") as &str, "bogus_flag"),
        (&HARMONIC.replace("K = 5", "K = 4"), "solver"),
        (&HARMONIC.replace("h = 1.0", "list = [1.0]"), "energy.h"),
    ];
    for (i, (body, key)) in cases.iter().enumerate() {
        let cfg = write(dir.path(), &format!("bad{i}.toml"), body);
        let o = solve_into(&cfg, &dir.path().join("out"), &[]);
        assert_eq!(code(&o), 1, "case {i}");
        assert!(stderr(&o).contains(key), "case {i}: {}", stderr(&o));
    }
    assert_eq!(code(&run(&["solve", "-c", "/nonexistent.toml"])), 1);
    assert_eq!(code(&run(&["nonsense"])), 1);
}

#[test]
fn check_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();
    let combined = write(
        dir.path(),
        "c.toml",
        "[potential]\nname = \"combined\"\na = 1.0\nn_exp = 1\ndim = 2\n[energy]\nh = 2.0\n",
    );
    assert_eq!(code(&run(&["check", "-c", combined.to_str().unwrap(), "--out", out])), 0);
    let well = write(dir.path(), "w.toml", "[potential]\nname = \"exp_well\"\ndim = 2\n[energy]\nh = 0.5\n");
    let o = run(&["check", "-c", well.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 4);
    let table = String::from_utf8_lossy(&o.stdout);
    assert!(table.lines().any(|l| l.contains("V6") && l.contains("FAIL")), "{table}");
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out/conditions.json")).unwrap()).unwrap();
    assert_eq!(report["v6"]["verdict"], "fail");
    let quartic = write(
        dir.path(),
        "q.toml",
        "[potential]\nname = \"power_law\"\na = 1.0\nn_exp = 1\ndim = 2\n[energy]\nh = -1.0\n",
    );
    let o = run(&["check", "-c", quartic.to_str().unwrap(), "--out", out, "--mu1", "2", "--mu2", "0"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn sweeps() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "h.toml", &HARMONIC.replace("h = 1.0", "list = [0.5, 1.0, 2.0]"));
    let out = dir.path().join("hs");
    let o = run(&["sweep", "-c", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let periods = column(&out.join("sweep.csv"), "T");
    assert_eq!(periods.len(), 3);
    for t in periods {
        assert!((t - 2.0 * PI).abs() <= 1e-6 * 2.0 * PI);
    }

    let cfg = write(dir.path(), "q.toml", QUARTIC_SWEEP);
    let out = dir.path().join("qs");
    assert_eq!(code(&run(&["sweep", "-c", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])), 0);
    let t = column(&out.join("sweep.csv"), "T");
    assert!(t[1] < t[0], "{t:?}");

    let cfg = write(dir.path(), "e.toml", &HARMONIC.replace("h = 1.0", "list = []"));
    assert_eq!(code(&run(&["sweep", "-c", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])), 1);
}

fn column(path: &Path, name: &str) -> Vec<f64> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let idx = lines.next().unwrap().split(',').position(|c| c == name).unwrap();
    lines.map(|l| l.split(',').nth(idx).unwrap().parse().unwrap()).collect()
}

#[test]
fn verify_round_trip_and_negative_controls() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", HARMONIC);
    let out = dir.path().join("out");
    assert_eq!(code(&solve_into(&cfg, &out, &[])), 0);
    let path = out.join("summary.json");
    let o = run(&["verify", path.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&run(&["verify", path.to_str().unwrap(), "--steps", "4096"])), 0);

    let mut s = summary(&out);
    let c = &mut s["best"]["loop"]["coeffs"][0]["a"][0];
    *c = Value::from(c.as_f64().unwrap() + 0.05);
    let bad = dir.path().join("corrupted.json");
    std::fs::write(&bad, serde_json::to_string_pretty(&s).unwrap()).unwrap();
    let o = run(&["verify", bad.to_str().unwrap()]);
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("exceeds") || stderr(&o).contains("differs"), "{}", stderr(&o));

    assert_eq!(code(&run(&["verify", dir.path().join("missing.json").to_str().unwrap()])), 1);
}

fn without_timestamp(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .filter(|l| !l.trim_start().starts_with("\"timestamp\""))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn identical_solves_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", HARMONIC);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(code(&solve_into(&cfg, &a, &["--history"])), 0);
    assert_eq!(code(&solve_into(&cfg, &b, &["--history"])), 0);
    assert_eq!(without_timestamp(&a.join("summary.json")), without_timestamp(&b.join("summary.json")));
    assert_eq!(std::fs::read(a.join("orbit.csv")).unwrap(), std::fs::read(b.join("orbit.csv")).unwrap());
}

#[test]
fn output_directory_precedence() {
    let dir = tempfile::tempdir().unwrap();
    let from_file = dir.path().join("from_file");
    let body = format!("{HARMONIC}\n[output]\ndir = {:?}\nemit_orbit_csv = false\n", from_file.to_str().unwrap());
    let cfg = write(dir.path(), "run.toml", &body);
    let cfg = cfg.to_str().unwrap();
    let bin = env!("CARGO_BIN_EXE_energy-orbit");

    assert_eq!(code(&run(&["solve", "-c", cfg])), 0);
    assert!(from_file.join("summary.json").exists());
    assert!(!from_file.join("orbit.csv").exists());

    let env_dir = dir.path().join("from_env");
    let o = Command::new(bin).args(["solve", "-c", cfg]).env(OUT_DIR_ENV, &env_dir).output().unwrap();
    assert_eq!(code(&o), 0);
    assert!(env_dir.join("summary.json").exists());

    let flag_dir = dir.path().join("from_flag");
    let o = Command::new(bin)
        .args(["solve", "-c", cfg, "--out", flag_dir.to_str().unwrap()])
        .env(OUT_DIR_ENV, &env_dir)
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(flag_dir.join("summary.json").exists());
}

#[test]
fn convergence_study_is_reported_on_request() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "run.toml", HARMONIC);
    let out = dir.path().join("out");
    assert_eq!(code(&solve_into(&cfg, &out, &["--convergence-study", "--integrator", "rk4"])), 0);
    let s = summary(&out);
    assert_eq!(s["convergence_study"]["K_refined"], 11);
    assert!(s["convergence_study"]["drift"].as_f64().unwrap() <= 1e-8);
    assert_eq!(s["diagnostics"]["integrator"], "rk4");
}
