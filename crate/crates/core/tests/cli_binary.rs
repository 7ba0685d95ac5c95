use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use relay_ra::cli::{self, EXIT_INPUT, EXIT_NONCONVERGED, EXIT_OK};

fn run(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relay-ra")).args(args).current_dir(cwd).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn generate_then_solve() {
    let dir = tempfile::tempdir().unwrap();
    let gen = run(&["generate", "-k", "4", "-u", "2", "--seed", "3", "--out", "ch.txt"], dir.path());
    assert_eq!(gen.status.code(), Some(EXIT_OK), "{}", stderr(&gen));
    let solved = run(&["solve", "ch.txt", "--snr-db", "20"], dir.path());
    assert_eq!(solved.status.code(), Some(EXIT_OK), "{}", stderr(&solved));
    let text = stdout(&solved);
    assert!(text.contains("protocol: novel"));
    assert!(text.contains("protocol: benchmark"));
    let rates: Vec<f64> = text
        .lines()
        .filter_map(|l| l.strip_prefix("sum_rate_bpos: "))
        .map(|v| v.trim().parse().unwrap())
        .collect();
    assert_eq!(rates.len(), 2);
    assert!(rates[0] >= rates[1] * (1.0 - 1e-6));
}

#[test]
fn generate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let a = run(&["generate", "-k", "3", "-u", "2", "--seed", "9", "--index", "4"], dir.path());
    let b = run(&["generate", "-k", "3", "-u", "2", "--seed", "9", "--index", "4"], dir.path());
    assert_eq!(a.status.code(), Some(EXIT_OK));
    assert_eq!(a.stdout, b.stdout);
    cli::parse_channel(&stdout(&a)).unwrap();
}

#[test]
fn malformed_channel_file_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.txt"), "K 1\nU 1\ng_sr\nx\n").unwrap();
    let o = run(&["solve", "bad.txt", "--p-tot", "1"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_INPUT));
    assert!(stderr(&o).contains("bad.txt:4"), "{}", stderr(&o));
}

#[test]
fn missing_file_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve", "nope.txt", "--p-tot", "1"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_INPUT));
}

#[test]
fn dead_channel_exits_with_non_convergence() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("dead.txt"), "K 1\nU 1\ng_sr\n0\ng_su\n0\ng_ru\n0\n").unwrap();
    let o = run(&["solve", "dead.txt", "--p-tot", "1"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_NONCONVERGED));
    assert!(stderr(&o).contains("did not converge"));
}

#[test]
fn empty_protocol_set_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("e.toml"), "experiment.protocols = []\n").unwrap();
    let o = run(&["experiment", "e.toml", "--out", "out"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_INPUT));
    assert!(!dir.path().join("out").join(cli::RESULTS_FILE).exists());
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("e.toml"), "experiment.userz = 3\n").unwrap();
    let o = run(&["experiment", "e.toml"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_INPUT));
}

#[test]
fn experiment_outputs_round_trip_and_manifest_reruns() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("e.toml"),
        "experiment.subcarriers = [4]\nexperiment.users = 2\nexperiment.snr_db = [10, 20]\nexperiment.realizations = 6\nexperiment.seed = 77\n",
    )
    .unwrap();
    let o = run(&["experiment", "e.toml", "--out", "first", "--quiet"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("first").join(cli::RESULTS_FILE)).unwrap();
    assert!(csv.starts_with(&cli::CSV_HEADER.join(",")));
    assert!(!csv.contains('\r'));
    let report = cli::report_from_csv(&csv).unwrap();
    assert_eq!(report.cells.len(), 2);
    assert_eq!(cli::report_to_csv(&report).unwrap(), csv);

    // The manifest is itself a valid config that reproduces the run.
    let manifest = dir.path().join("first").join(cli::MANIFEST_FILE);
    let o = run(&["experiment", manifest.to_str().unwrap(), "--out", "second", "--quiet"], dir.path());
    assert_eq!(o.status.code(), Some(EXIT_OK), "{}", stderr(&o));
    let again = fs::read_to_string(dir.path().join("second").join(cli::RESULTS_FILE)).unwrap();
    assert_eq!(csv, again);
}
