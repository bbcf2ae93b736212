use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BASE: &str = r#"
d = 2
N = 32
alpha = [1.0, 1.4142135623730951]
omega = 0.6180339887498949
"#;

const SINES: &str = r#"
U_modes = [
  { k = [1, 0], re = 0.0025, im = 0.0 },
  { k = [-1, 0], re = 0.0025, im = 0.0 },
  { k = [0, 1], re = 0.0025, im = 0.0 },
  { k = [0, -1], re = 0.0025, im = 0.0 },
]
"#;

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn qpfk(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qpfk"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn header(path: &Path, key: &str) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines()
        .filter_map(|l| l.strip_prefix("# "))
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(' ')))
        .unwrap_or_else(|| panic!("no `{key}` header in {}", path.display()))
        .to_string()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn zero_force_solve_gives_zero_lambda() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let out = tmp.path().join("out");
    let run = qpfk(&["solve"], &cfg, &out);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    let lambda: f64 = header(&out.join("h.dump"), "lambda").parse().unwrap();
    assert_eq!(lambda, 0.0);
    let dump = std::fs::read_to_string(out.join("h.dump")).unwrap();
    let records: Vec<&str> = dump.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(records.len(), 32 * 32);
    assert!(records
        .iter()
        .all(|l| l.ends_with(" 0.0000000000000000e0 0.0000000000000000e0")));
}

#[test]
fn odd_resolution_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &BASE.replace("N = 32", "N = 31"));
    let run = qpfk(&["solve"], &cfg, &tmp.path().join("out"));
    assert_eq!(run.status.code(), Some(1));
    assert!(stderr(&run).contains("`N`"), "{}", stderr(&run));
}

#[test]
fn unknown_field_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{BASE}\nlamda0 = 0.1\n"));
    let run = qpfk(&["solve"], &cfg, &tmp.path().join("out"));
    assert_eq!(run.status.code(), Some(1));
    assert!(stderr(&run).contains("lamda0"), "{}", stderr(&run));
}

#[test]
fn missing_config_flag_is_usage_error() {
    let run = Command::new(env!("CARGO_BIN_EXE_qpfk"))
        .arg("solve")
        .output()
        .unwrap();
    assert_eq!(run.status.code(), Some(1));
    assert!(stderr(&run).contains("--config"));
}

#[test]
fn unreadable_config_is_io_error() {
    let tmp = TempDir::new().unwrap();
    let run = qpfk(
        &["solve"],
        &tmp.path().join("absent.toml"),
        &tmp.path().join("out"),
    );
    assert_eq!(run.status.code(), Some(3), "{}", stderr(&run));
}

#[test]
fn verify_passes_on_converged_state() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{BASE}{SINES}"));
    let out = tmp.path().join("out");
    let run = qpfk(&["solve"], &cfg, &out);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    let run = qpfk(&["verify"], &cfg, &out);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    let normalized = report["normalized"].as_object().unwrap();
    assert_eq!(normalized.len(), 5);
    for (name, v) in normalized {
        assert!(v.as_f64().unwrap() < 1e-10, "{name}: {v}");
    }
    assert!(report["residual_sup"].as_f64().unwrap() < 1e-12);
}

#[test]
fn identities_hold_away_from_the_solution() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{BASE}{SINES}"));
    let out = tmp.path().join("out");
    assert_eq!(qpfk(&["solve"], &cfg, &out).status.code(), Some(0));
    // overwrite the (±1, 0) pair; the state is then far from an equilibrium
    let dump = out.join("h.dump");
    let text = std::fs::read_to_string(&dump).unwrap();
    let edited: String = text
        .lines()
        .map(|l| {
            let k: Vec<&str> = l.split_whitespace().take(2).collect();
            if k == ["1", "0"] || k == ["-1", "0"] {
                format!("{} {} 1.0e-2 0.0\n", k[0], k[1])
            } else {
                format!("{l}\n")
            }
        })
        .collect();
    std::fs::write(&dump, edited).unwrap();
    let run = qpfk(&["verify"], &cfg, &out);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("verify.json")).unwrap()).unwrap();
    assert!(report["residual_sup"].as_f64().unwrap() > 1e-3);
}

#[test]
fn verify_rejects_a_state_of_another_resolution() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), BASE);
    let out = tmp.path().join("out");
    assert_eq!(qpfk(&["solve"], &cfg, &out).status.code(), Some(0));
    let other = write_config(tmp.path(), &BASE.replace("N = 32", "N = 64"));
    let run = qpfk(&["verify"], &other, &out);
    assert_eq!(run.status.code(), Some(1), "{}", stderr(&run));
    assert!(stderr(&run).contains("N 32"), "{}", stderr(&run));
}

#[test]
fn divergence_writes_failure_record() {
    let tmp = TempDir::new().unwrap();
    let strong = SINES.replace("0.0025", "0.5");
    let cfg = write_config(tmp.path(), &format!("{BASE}max_iter = 4\n{strong}"));
    let out = tmp.path().join("out");
    let run = qpfk(&["solve"], &cfg, &out);
    assert_eq!(run.status.code(), Some(2), "{}", stderr(&run));
    let failure: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("failure.json")).unwrap()).unwrap();
    assert!(failure["kind"].is_string());
    assert!(failure["provenance"]["config_sha256"].is_string());
    assert!(!out.join("h.dump").exists());
}

#[test]
fn dumps_are_byte_identical_across_runs_and_thread_counts() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(tmp.path(), &format!("{BASE}{SINES}"));
    let mut dumps = Vec::new();
    for (i, threads) in ["1", "1", "2", "3"].iter().enumerate() {
        let out = tmp.path().join(format!("out{i}"));
        let run = qpfk(&["solve", "--threads", threads], &cfg, &out);
        assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
        let text = std::fs::read_to_string(out.join("h.dump")).unwrap();
        // the provenance names the thread count; compare the rest
        let body: String = text
            .lines()
            .filter(|l| !l.starts_with("# threads"))
            .collect();
        dumps.push(body);
    }
    assert!(dumps.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn every_output_carries_provenance() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        tmp.path(),
        &format!("{BASE}{SINES}\n[lindstedt]\norder = 3\n"),
    );
    let out = tmp.path().join("out");
    for cmd in ["solve", "lindstedt"] {
        let run = qpfk(&[cmd], &cfg, &out);
        assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    }
    let hash = header(&out.join("h.dump"), "config-sha256");
    assert_eq!(hash.len(), 64);
    let mut seen = 0;
    for entry in std::fs::read_dir(&out).unwrap() {
        let path = entry.unwrap().path();
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(
            text.contains(&hash),
            "{} lacks the config hash",
            path.display()
        );
        assert!(
            text.contains("0.1.0"),
            "{} lacks the version",
            path.display()
        );
        seen += 1;
    }
    // h.dump, history ×2, summary, 3 series dumps, lindstedt.json, scaling ×2
    assert_eq!(seen, 10);
}

#[test]
fn continuation_records_are_line_delimited() {
    let tmp = TempDir::new().unwrap();
    let unit = SINES.replace("0.0025", "0.5");
    let cfg = write_config(
        tmp.path(),
        &format!("{BASE}{unit}\n[ramp]\nstart = 0.0\nstop = 0.006\nstep = 0.002\n"),
    );
    let out = tmp.path().join("out");
    let run = qpfk(&["continue"], &cfg, &out);
    assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    let text = std::fs::read_to_string(out.join("records.jsonl")).unwrap();
    let lines: Vec<serde_json::Value> = text
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(lines[0]["provenance"].is_object());
    assert_eq!(lines.len(), 1 + 4);
    for (rec, p) in lines[1..].iter().zip([0.0, 0.002, 0.004, 0.006]) {
        assert!((rec["param"].as_f64().unwrap() - p).abs() < 1e-15);
        assert_eq!(rec["converged"], true);
    }
    let csv = std::fs::read_to_string(out.join("records.csv")).unwrap();
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 1 + 4);
}

#[test]
fn bisect_on_explicit_bracket_without_breakdown_fails_numerically() {
    let tmp = TempDir::new().unwrap();
    let unit = SINES.replace("0.0025", "0.5");
    let cfg = write_config(
        tmp.path(),
        &format!("{BASE}{unit}\n[ramp]\nstart = 0.0\nstop = 0.004\nstep = 0.002\nlower = 0.001\nupper = 0.002\n"),
    );
    let out = tmp.path().join("out");
    let run = qpfk(&["bisect"], &cfg, &out);
    assert_eq!(run.status.code(), Some(2), "{}", stderr(&run));
    let failure: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("failure.json")).unwrap()).unwrap();
    assert_eq!(failure["kind"], "no-breakdown");
}
