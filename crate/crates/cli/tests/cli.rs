use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_seirvax");

const BASE: &str = r#"
[params]
N = 1000.0
mu = 0.01
omega = 0.02
beta = 0.9
sigma = 0.2
gamma = 0.2

[initial]
S = 900.0
E = 50.0
I = 50.0
R = 0.0

[law]
name = "immune_feedback"
g = 0.0
g1 = 0.03

[integrator]
t_end = 1000.0
dt = 0.01
stride = 10

[checks]
run = ["conservation", "asymptotics", "integral_limit", "decay_rate"]
"#;

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("spawn seirvax")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write(dir: &TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::write(&p, body).unwrap();
    p
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn last_row(csv: &Path) -> Vec<f64> {
    let text = std::fs::read_to_string(csv).unwrap();
    text.lines().last().unwrap().split(',').map(|f| f.parse().unwrap()).collect()
}

#[test]
fn immune_feedback_scenario_passes_and_reaches_n() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(&dir, "sc.toml", BASE);
    let out = run(&["simulate", s(&sc), "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 0, "{}{}", stdout(&out), stderr(&out));
    assert!(stdout(&out).contains("result: PASS"));
    let row = last_row(&dir.path().join("trajectory.csv"));
    assert!((row[4] - 1000.0).abs() < 1e-3 * 1000.0, "R(t_end) = {}", row[4]);
}

#[test]
fn bad_initial_sum_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(&dir, "sc.toml", &BASE.replace("R = 0.0", "R = 5.0"));
    let out = run(&["simulate", s(&sc), "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("sum to N"), "{}", stderr(&out));
}

#[test]
fn failing_gain_clause_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(&dir, "sc.toml", &BASE.replace("g = 0.0", "g = -0.5"));
    let out = run(&["simulate", s(&sc), "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("gain constraint"), "{}", stderr(&out));
}

#[test]
fn unknown_field_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(&dir, "sc.toml", &BASE.replace("stride = 10", "stride = 10\nstep = 3"));
    assert_eq!(code(&run(&["simulate", s(&sc)])), 1);
}

#[test]
fn prediction_free_law_refuses_asymptotics() {
    let dir = tempfile::tempdir().unwrap();
    let body = BASE.replace("name = \"immune_feedback\"\ng = 0.0\ng1 = 0.03", "name = \"zero_vax\"");
    let sc = write(&dir, "sc.toml", &body);
    let out = run(&["simulate", s(&sc), "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("asymptotics"), "{}", stderr(&out));
}

#[test]
fn short_horizon_is_reported() {
    let dir = tempfile::tempdir().unwrap();
    let sc = write(&dir, "sc.toml", BASE);
    let out = run(&["simulate", s(&sc), "--out-dir", s(dir.path()), "--t-end", "50"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("horizon"), "{}", stderr(&out));
}

#[test]
fn simulate_then_verify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let body = BASE.replace(
        "run = [\"conservation\", \"asymptotics\", \"integral_limit\", \"decay_rate\"]",
        "run = [\"conservation\", \"positivity\", \"identities\"]",
    )
    .replace("g = 0.0\ng1 = 0.03", "g = 0.17\ng1 = 0.2")
        + "\n[outputs]\ncsv = \"traj.csv\"\nsvg = \"traj.svg\"\nreport = \"report.json\"\n";
    let sc = write(&dir, "sc.toml", &body);
    let out = run(&["simulate", s(&sc), "--out-dir", s(dir.path()), "--t-end", "100"]);
    // unsaturated immune feedback drives S negative from this start
    assert_eq!(code(&out), 2, "{}", stdout(&out));
    assert!(stdout(&out).contains("[FAIL] positivity.lower"));

    let csv = dir.path().join("traj.csv");
    let svg = std::fs::read_to_string(dir.path().join("traj.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], false);

    let verify = run(&["verify", s(&csv), s(&sc)]);
    assert_eq!(code(&verify), 2);
    // identical verdicts from the stored trajectory
    let lines = |t: &str| t.lines().filter(|l| l.starts_with('[')).map(str::to_owned).collect::<Vec<_>>();
    assert_eq!(lines(&stdout(&out)), lines(&stdout(&verify)));
}

fn simulated_csv(dir: &TempDir) -> (PathBuf, PathBuf) {
    let sc = write(dir, "sc.toml", BASE);
    let out = run(&["simulate", s(&sc), "--out-dir", s(dir.path())]);
    assert_eq!(code(&out), 0);
    (dir.path().join("trajectory.csv"), sc)
}

#[test]
fn verify_accepts_untouched_csv() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, sc) = simulated_csv(&dir);
    assert_eq!(code(&run(&["verify", s(&csv), s(&sc)])), 0);
}

#[test]
fn verify_rejects_header_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, sc) = simulated_csv(&dir);
    let text = std::fs::read_to_string(&csv).unwrap().replacen("t,S,E,I,R,V,u", "t,S,E,I,R,V,w", 1);
    std::fs::write(&csv, text).unwrap();
    let out = run(&["verify", s(&csv), s(&sc)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("header mismatch"));
}

#[test]
fn verify_rejects_non_monotone_time() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, sc) = simulated_csv(&dir);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.swap(3, 4);
    std::fs::write(&csv, lines.join("\n")).unwrap();
    let out = run(&["verify", s(&csv), s(&sc)]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("strictly increasing"), "{}", stderr(&out));
}

#[test]
fn verify_flags_tampered_population() {
    let dir = tempfile::tempdir().unwrap();
    let (csv, sc) = simulated_csv(&dir);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines: Vec<String> = text.lines().map(str::to_owned).collect();
    let k = lines.len() / 2;
    let mut f: Vec<String> = lines[k].split(',').map(str::to_owned).collect();
    f[4] = (f[4].parse::<f64>().unwrap() + 1.0).to_string();
    lines[k] = f.join(",");
    std::fs::write(&csv, lines.join("\n")).unwrap();
    let out = run(&["verify", s(&csv), s(&sc)]);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("[FAIL] conservation"));
}

#[test]
fn equilibria_default_parameters() {
    let dir = tempfile::tempdir().unwrap();
    let json = dir.path().join("eq.json");
    let out = run(&["equilibria", "--json", s(&json)]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    assert!(text.contains("S = 245.000000, E = 90.946463, I = 86.615679, R = 577.437859"), "{text}");
    assert!(text.contains("robustness condition fails"));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let x2 = &v["endemic"]["point"]["state"];
    assert!((x2["S"].as_f64().unwrap() - 245.0).abs() < 1e-9);
    assert_eq!(v["disease_free"]["locally_stable"], false);
}

#[test]
fn equilibria_mu_zero_branch() {
    let out = run(&["equilibria", "--mu", "0"]);
    assert_eq!(code(&out), 0);
    let text = stdout(&out);
    // sigma N / beta and (beta - sigma) sigma N / (beta (2 omega + sigma))
    assert!(text.contains("mu = 0 branch"), "{text}");
    assert!(text.contains("S = 222.222222"), "{text}");
    assert!(text.contains("R = 648.148148"), "{text}");
}

#[test]
fn equilibria_without_endemic_point() {
    let out = run(&["equilibria", "--beta", "0.04"]);
    assert_eq!(code(&out), 0);
    assert!(stdout(&out).contains("no endemic equilibrium"));
}

#[test]
fn equilibria_sigma_gamma_mismatch() {
    let out = run(&["equilibria", "--gamma", "0.3"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("sigma equals gamma"));
    assert_eq!(code(&run(&["equilibria", "--gamma", "0.3", "--no-endemic"])), 0);
}

#[test]
fn zerodyn_from_full_population() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["zerodyn", "--out-dir", s(dir.path()), "--t-end", "200"]);
    assert_eq!(code(&out), 0, "{}", stdout(&out));
    let row = last_row(&dir.path().join("zerodyn.csv"));
    assert!((row[4] - 1000.0).abs() <= 1e-9 * 1000.0);
}

#[test]
fn zerodyn_off_simplex_start_fails_conservation() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["zerodyn", "--out-dir", s(dir.path()), "--z2", "500", "--t-end", "200"]);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("relaxes toward N"));
}

#[test]
fn argument_errors_exit_one_and_help_exits_zero() {
    assert_eq!(code(&run(&["nonsense"])), 1);
    assert_eq!(code(&run(&["equilibria", "--beta", "abc"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
    assert_eq!(code(&run(&["simulate", "/nonexistent/scenario.toml"])), 1);
}

#[test]
fn shipped_scenarios_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut n = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            seirvax::scenario::Scenario::load(&path).unwrap_or_else(|e| panic!("{}: {e:#}", path.display()));
            n += 1;
        }
    }
    assert!(n >= 3);
}
