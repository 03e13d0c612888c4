use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};

fn sim(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sim")).args(args).output().expect("runs sim")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn run_writes_logs_and_is_repeatable() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("a");
    let first = sim(&[
        "run",
        "--model",
        "m2sim",
        "--difficulty",
        "hard",
        "--trials",
        "2",
        "--seed",
        "30",
        "--out",
        p(&out),
        "--verify",
    ]);
    assert!(first.status.success(), "{}", stderr(&first));
    assert!(out.join("trial-30.hclog").exists() && out.join("trial-31.hclog").exists());
    let report = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(report.contains("difficulty=hard") && report.contains("decision_time_min.mean="));
    let second = sim(&["run", "--model", "m2sim", "--difficulty", "hard", "--trials", "2", "--seed", "30"]);
    assert_eq!(stdout(&first), stdout(&second));
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "recruit_rate = 7.0\n").unwrap();
    assert_eq!(sim(&["run", "--params", p(&bad)]).status.code(), Some(2));
    assert_eq!(sim(&["run", "--params", p(&dir.path().join("missing.toml"))]).status.code(), Some(2));
    assert_eq!(sim(&["run", "--model", "m2sim", "--policy", "oracle-assist"]).status.code(), Some(2));
    let policy = dir.path().join("p.policy");
    std::fs::write(&policy, "decide target=best min_support=30%\nfrobnicate\n").unwrap();
    let o = sim(&["run", "--model", "m2", "--policy", p(&policy)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
    assert_eq!(sim(&["run", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(sim(&["serve", "--speed", "0"]).status.code(), Some(2));
}

#[test]
fn scripted_policy_runs_on_m2() {
    let fixture = concat!(env!("CARGO_MANIFEST_DIR"), "/../core/tests/fixtures/oracle-assist.policy");
    let o = sim(&["run", "--model", "m2", "--trials", "1", "--seed", "3", "--policy", fixture]);
    assert!(o.status.success(), "{}", stderr(&o));
    let builtin = sim(&["run", "--model", "m2", "--trials", "1", "--seed", "3", "--policy", "oracle-assist"]);
    assert_eq!(stdout(&o), stdout(&builtin));
}

fn fresh_log(dir: &Path, seed: &str) -> std::path::PathBuf {
    let o =
        sim(&["run", "--model", "m2", "--policy", "oracle-assist", "--trials", "1", "--seed", seed, "--out", p(dir)]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join(format!("trial-{seed}.hclog"))
}

#[test]
fn replay_reports_clean_and_tampered_logs() {
    let dir = tempfile::tempdir().unwrap();
    let log = fresh_log(dir.path(), "21");
    let o = sim(&["replay", p(&log)]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("divergences=0"));

    let text = std::fs::read_to_string(&log).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let i = lines.iter().position(|l| l.contains("\"kind\":\"TargetAssessed\"")).unwrap();
    let seq: u64 = serde_seq(&lines[i]);
    let value_at = lines[i].find("\"value\":").unwrap() + 8;
    let end = lines[i][value_at..].find(|c: char| !c.is_ascii_digit()).unwrap() + value_at;
    let v: u32 = lines[i][value_at..end].parse().unwrap();
    lines[i].replace_range(value_at..end, &(v % 100 + 1).to_string());
    let tampered = dir.path().join("tampered.hclog");
    std::fs::write(&tampered, lines.join("\n") + "\n").unwrap();
    let o = sim(&["replay", p(&tampered)]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains(&format!("seq {seq}")), "{}", stderr(&o));

    let garbled = dir.path().join("garbled.hclog");
    std::fs::write(&garbled, "{not json\n").unwrap();
    let o = sim(&["replay", p(&garbled)]);
    assert!(!o.status.success());
    assert_ne!(o.status.code(), Some(3));
}

fn serde_seq(line: &str) -> u64 {
    let start = line.find("\"seq\":").unwrap() + 6;
    line[start..].split(|c: char| !c.is_ascii_digit()).next().unwrap().parse().unwrap()
}

#[test]
fn metrics_filters_by_difficulty() {
    let dir = tempfile::tempdir().unwrap();
    let log = fresh_log(dir.path(), "22");
    let o = sim(&["metrics", p(&log)]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.starts_with("seed=22\n"), "{text}");
    let o = sim(&["metrics", p(&log), "--difficulty", "hard"]);
    assert!(o.status.success() && stdout(&o).is_empty());
}

#[test]
fn calibrate_writes_best_params() {
    let dir = tempfile::tempdir().unwrap();
    let o = sim(&["calibrate", "--trials", "1", "--seed", "0", "--out", p(dir.path())]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 13);
    let params = dir.path().join("params.toml");
    let run = sim(&["run", "--params", p(&params), "--trials", "1"]);
    assert!(run.status.success(), "{}", stderr(&run));
}

struct Server(Child, String);

impl Drop for Server {
    fn drop(&mut self) {
        let _ = self.0.kill();
        let _ = self.0.wait();
    }
}

fn serve() -> Server {
    let mut child = Command::new(env!("CARGO_BIN_EXE_sim"))
        .args(["serve", "--port", "0", "--speed", "50"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    let url = line.trim().strip_prefix("listening on ").expect("listen line").to_string();
    Server(child, url)
}

#[test]
fn remote_commands_match_local() {
    let server = serve();
    let url = server.1.as_str();
    let args = ["run", "--model", "m2sim", "--trials", "2", "--seed", "60"];
    let local = sim(&args);
    let remote = sim(&[&args[..], &["--server", url]].concat());
    assert!(remote.status.success(), "{}", stderr(&remote));
    assert_eq!(stdout(&local), stdout(&remote));

    let dir = tempfile::tempdir().unwrap();
    let log = fresh_log(dir.path(), "23");
    let local = sim(&["replay", p(&log)]);
    let remote = sim(&["replay", p(&log), "--server", url]);
    assert!(remote.status.success(), "{}", stderr(&remote));
    assert_eq!(stdout(&local), stdout(&remote));
    let local = sim(&["metrics", p(&log)]);
    let remote = sim(&["metrics", p(&log), "--server", url]);
    assert_eq!(stdout(&local), stdout(&remote));

    let bad = sim(&["run", "--model", "m2sim", "--trials", "1", "--params", "/nonexistent", "--server", url]);
    assert_eq!(bad.status.code(), Some(2));
}
