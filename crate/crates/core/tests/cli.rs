use std::process::Command;

use circmap::cli::{data_section, EXIT_CONFIG, EXIT_USAGE};

fn circmap(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_circmap"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap(),
        String::from_utf8(out.stdout).unwrap(),
        String::from_utf8(out.stderr).unwrap(),
    )
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let (code, _, err) = circmap(&["frobnicate"]);
    assert_eq!(code, EXIT_USAGE);
    assert!(!err.is_empty());
}

#[test]
fn missing_config_file_is_a_config_error() {
    let (code, _, err) = circmap(&[
        "--config",
        "/nonexistent/params.toml",
        "map-eval",
        "--points",
        "4",
    ]);
    assert_eq!(code, EXIT_CONFIG);
    assert!(!err.is_empty());
}

#[test]
fn header_echoes_the_run() {
    let (code, out, _) = circmap(&[
        "--suite",
        "beta3",
        "--seed",
        "5",
        "map-eval",
        "--z",
        "0.5,-0.25",
    ]);
    assert_eq!(code, 0);
    let header = out.lines().next().unwrap().strip_prefix("# ").unwrap();
    let meta: serde_json::Value = serde_json::from_str(header).unwrap();
    assert_eq!(meta["command"], "map-eval");
    assert_eq!(meta["seed"], 5);
    assert!(meta["params"]["beta"].as_f64().unwrap() == 3.0);
    let data = data_section(&out);
    assert!(data.starts_with("z,f,df,d2f,d3f,nearest,distance"));
    assert_eq!(data.lines().count(), 3);
}

#[test]
fn scan_survivors_feed_density() {
    let dir = tempfile::tempdir().unwrap();
    let surv = dir.path().join("survivors.txt");
    let surv = surv.to_str().unwrap();
    let (code, out, _) = circmap(&[
        "--suite",
        "beta3",
        "scan",
        "--grid-size",
        "20",
        "--horizon-n",
        "1000",
        "--survivors-out",
        surv,
    ]);
    assert_eq!(code, 0);
    let report: serde_json::Value = serde_json::from_str(data_section(&out)).unwrap();
    assert!(report["survivor_fraction"].as_f64().unwrap() > 0.0);

    let (code, out, _) = circmap(&[
        "--suite",
        "beta3",
        "--survivors",
        surv,
        "density",
        "--iters",
        "20000",
        "--bins",
        "32",
        "--sample-size",
        "2",
    ]);
    assert_eq!(code, 0);
    let rows = data_section(&out).lines().skip(1).count();
    assert_eq!(rows, 32);

    let (code, _, _) = circmap(&[
        "--suite",
        "beta3",
        "--survivors",
        surv,
        "--survivor-index",
        "100000",
        "density",
    ]);
    assert_eq!(code, EXIT_CONFIG);
}

#[test]
fn zero_workers_is_rejected() {
    let (code, _, _) = circmap(&["--workers", "0", "map-eval", "--points", "2"]);
    assert_eq!(code, EXIT_USAGE);
}
