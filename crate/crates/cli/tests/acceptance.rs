//! Acceptance criterion 11 — identical invocations produce byte-identical
//! CSV output — plus the exit-code contract and the JSON config-echo
//! round-trip, all driven through the compiled binary.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use sphere_cbo::dynamics::SolverParams;

const BIN: &str = env!("CARGO_BIN_EXE_sphere-cbo");

fn verdict(number: u32, what: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {number:02} {tag}: {what} — {detail}");
    assert!(pass, "criterion {number:02} FAIL: {what} — {detail}");
}

fn run(args: &[&str]) -> Output {
    Command::new(BIN)
        .args(args)
        .env_remove("SPHERE_CBO_SEED")
        .output()
        .expect("binary should spawn")
}

fn sweep_to(path: &Path, threads: &str) -> Output {
    run(&[
        "benchmark-sweep",
        "--functions",
        "ackley,rastrigin",
        "--dim",
        "6",
        "--runs",
        "4",
        "--n-agents",
        "30",
        "--batch-size",
        "18",
        "--max-iter",
        "600",
        "--threads",
        threads,
        "--seed",
        "42",
        "--out-csv",
        path.to_str().unwrap(),
    ])
}

#[test]
fn criterion_11_byte_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first.csv");
    let second = dir.path().join("second.csv");
    let threaded = dir.path().join("threaded.csv");

    let out_first = sweep_to(&first, "1");
    let out_second = sweep_to(&second, "1");
    assert!(out_first.status.success(), "first run failed: {out_first:?}");
    assert!(out_second.status.success(), "second run failed: {out_second:?}");

    let bytes_first = fs::read(&first).unwrap();
    let bytes_second = fs::read(&second).unwrap();

    let header = bytes_first.split(|&b| b == b'\n').next().unwrap().to_vec();
    assert_eq!(
        String::from_utf8(header).unwrap(),
        "function,noise,d,N,M,runs,success_rate,mean_error,N_avg,n_avg,seed"
    );

    // Same bytes again from a differently sized thread pool: scheduling must
    // not leak into results.
    let out_threaded = sweep_to(&threaded, "2");
    assert!(out_threaded.status.success(), "threaded run failed: {out_threaded:?}");
    let bytes_threaded = fs::read(&threaded).unwrap();

    verdict(
        11,
        "identical seeded invocations emit byte-identical CSV",
        bytes_first == bytes_second && bytes_first == bytes_threaded,
        &format!(
            "{} bytes; repeat identical: {}; 2-thread pool identical: {}",
            bytes_first.len(),
            bytes_first == bytes_second,
            bytes_first == bytes_threaded
        ),
    );
}

#[test]
fn exit_codes_follow_the_contract() {
    // Invalid parameter value: configuration error, exit 2.
    let bad_mu = run(&["benchmark-sweep", "--functions", "ackley", "--dim", "4", "--mu", "1.5"]);
    assert_eq!(bad_mu.status.code(), Some(2), "mu out of range must exit 2");
    let message = String::from_utf8_lossy(&bad_mu.stderr);
    assert!(message.contains("mu"), "stderr should name the bad parameter: {message}");

    // Unknown key in a config file: exit 2, naming the key.
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "sigma = 1.0\nwalrus = 3\n").unwrap();
    let bad_key = run(&[
        "benchmark-sweep",
        "--functions",
        "ackley",
        "--dim",
        "4",
        "--config",
        config.to_str().unwrap(),
    ]);
    assert_eq!(bad_key.status.code(), Some(2), "unknown config key must exit 2");
    let message = String::from_utf8_lossy(&bad_key.stderr);
    assert!(message.contains("walrus"), "stderr should name the unknown key: {message}");

    // Gradient cadence without enabling injections: exit 2.
    let orphan_ell = run(&[
        "benchmark-sweep",
        "--functions",
        "ackley",
        "--dim",
        "4",
        "--runs",
        "1",
        "--ell",
        "5",
    ]);
    assert_eq!(orphan_ell.status.code(), Some(2), "--ell without --gkv must exit 2");

    // Unwritable output path: I/O error, exit 3.
    let unwritable = run(&[
        "benchmark-sweep",
        "--functions",
        "ackley",
        "--dim",
        "4",
        "--runs",
        "1",
        "--n-agents",
        "10",
        "--batch-size",
        "6",
        "--max-iter",
        "50",
        "--out-csv",
        "/definitely/not/a/directory/out.csv",
    ]);
    assert_eq!(unwritable.status.code(), Some(3), "unwritable --out-csv must exit 3");
}

#[test]
fn json_echo_round_trips_the_solver_config() {
    let dir = tempfile::tempdir().unwrap();
    let json_path = dir.path().join("run.json");
    let out = run(&[
        "single-run",
        "--function",
        "griewank",
        "--dim",
        "5",
        "--alpha",
        "inf",
        "--sigma",
        "2.25",
        "--max-iter",
        "80",
        "--n-agents",
        "12",
        "--batch-size",
        "12",
        "--seed",
        "1234",
        "--out-json",
        json_path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "single-run failed: {out:?}");

    let document: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&json_path).unwrap()).unwrap();
    let solver = document
        .get("config")
        .and_then(|c| c.get("solver"))
        .expect("document must echo the solver configuration");
    assert_eq!(solver.get("alpha").unwrap(), "inf");

    let parsed: SolverParams = serde_json::from_value(solver.clone()).unwrap();
    assert_eq!(parsed.alpha, f64::INFINITY);
    assert_eq!(parsed.sigma, 2.25);
    assert_eq!(parsed.n_agents, 12);
    assert_eq!(parsed.seed, 1234);

    // The report carries the run outcome.
    let report = document.get("report").expect("document must include the run report");
    assert!(report.get("iterations").unwrap().as_u64().unwrap() <= 80);
}
