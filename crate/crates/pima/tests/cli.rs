//! Black-box CLI behavior: exit codes and output plumbing.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_pima"))
}

fn write_fixture(dir: &std::path::Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let data = dir.join("d.csv");
    std::fs::write(
        &data,
        "y,x,z\n1.2,0.3,0.1\n-0.5,1.1,0.4\n0.7,-0.2,1.3\n2.1,0.8,-0.6\n\
         -1.0,-1.2,0.2\n0.3,0.5,0.9\n1.8,1.4,-0.3\n-0.7,-0.9,1.1\n\
         0.1,0.2,-1.4\n1.1,0.6,0.7\n-0.4,-0.5,-0.8\n0.9,1.0,0.5\n",
    )
    .unwrap();
    let spec = dir.join("s.json");
    std::fs::write(
        &spec,
        r#"{"family": "gaussian", "response": "y",
            "interest": [{"column": "x"}],
            "confounders": [{"column": "z", "transforms": ["identity"]}]}"#,
    )
    .unwrap();
    (data, spec)
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let status = bin().args(["multiverse", "--bogus"]).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn missing_seed_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let (data, spec) = write_fixture(dir.path());
    let out = bin()
        .args(["multiverse", "--data"])
        .arg(&data)
        .arg("--spec")
        .arg(&spec)
        .args(["--B", "32"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("seed"));
}

#[test]
fn missing_data_file_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (_, spec) = write_fixture(dir.path());
    let status = bin()
        .args(["multiverse", "--data", "/nonexistent.csv", "--spec"])
        .arg(&spec)
        .args(["--seed", "1", "--B", "32"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn unknown_column_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = write_fixture(dir.path());
    let spec = dir.path().join("bad.json");
    std::fs::write(
        &spec,
        r#"{"family": "gaussian", "response": "nope",
            "interest": [{"column": "x"}]}"#,
    )
    .unwrap();
    let status = bin()
        .args(["multiverse", "--data"])
        .arg(&data)
        .arg("--spec")
        .arg(&spec)
        .args(["--seed", "1", "--B", "32"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn successful_run_writes_outputs_and_warns_on_small_b() {
    let dir = tempfile::tempdir().unwrap();
    let (data, spec) = write_fixture(dir.path());
    let csv = dir.path().join("out.csv");
    let json = dir.path().join("out.json");
    let out = bin()
        .args(["multiverse", "--data"])
        .arg(&data)
        .arg("--spec")
        .arg(&spec)
        // B = 10 < ceil(1/alpha) at alpha = 0.05: warn, do not fail.
        .args(["--seed", "1", "--B", "10"])
        .arg("--out-csv")
        .arg(&csv)
        .arg("--out-json")
        .arg(&json)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).to_lowercase().contains("warning"));
    let csv_text = std::fs::read_to_string(&csv).unwrap();
    assert!(csv_text.starts_with("group,spec_id,n_obs,beta_hat,t_obs,raw_p,adjusted_p"));
    let json_text = std::fs::read_to_string(&json).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&json_text).unwrap();
    assert!(parsed.get("global").is_some());
}

#[test]
fn help_and_version_exit_zero() {
    assert_eq!(bin().arg("--help").status().unwrap().code(), Some(0));
    assert_eq!(bin().arg("--version").status().unwrap().code(), Some(0));
}
