//! Exit-code and artifact behavior of the command-line front end.

use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stackeldn"))
}

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

#[test]
fn validate_accepts_shipped_fixtures() {
    for name in ["f1.json", "f2.json", "fr.json"] {
        let status = bin().arg("validate").arg(fixtures().join(name)).status().unwrap();
        assert!(status.success(), "{name} should validate");
    }
}

#[test]
fn validate_rejects_denormalized_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.json");
    // identity matrix: s12 = 0 violates the sign normalization
    std::fs::write(
        &path,
        r#"{"rows":[["1","0","0"],["0","1","0"],["0","0","1"]],"A":1.0,"phi":["0","0","0"]}"#,
    )
    .unwrap();
    let status = bin().arg("validate").arg(&path).status().unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn missing_fixture_is_a_config_error() {
    let status = bin().arg("validate").arg("/nonexistent/f.json").status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn scenario_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // malformed JSON
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ not json").unwrap();
    let status = bin().arg("suite").arg(&bad).status().unwrap();
    assert_eq!(status.code(), Some(2));
    // unknown suite name
    let unknown = dir.path().join("unknown.json");
    std::fs::write(
        &unknown,
        format!(
            r#"{{"suite":"nope","fixture":"{}"}}"#,
            fixtures().join("f1.json").display()
        ),
    )
    .unwrap();
    let status = bin().arg("suite").arg(&unknown).status().unwrap();
    assert_eq!(status.code(), Some(2));
    // missing fixture file
    let missing = dir.path().join("missing.json");
    std::fs::write(&missing, r#"{"suite":"gauge","fixture":"does-not-exist.json"}"#).unwrap();
    let status = bin().arg("suite").arg(&missing).status().unwrap();
    assert_eq!(status.code(), Some(2));
}

#[test]
fn spectrum_export_has_expected_columns() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .arg("spectrum")
        .arg(fixtures().join("f1.json"))
        .arg("--count")
        .arg("5")
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("spectrum.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "m,mu2,nu2,multiplicity,residual_v,residual_w"
    );
    assert!(lines.count() >= 5);
}

#[test]
fn wt_export_runs() {
    let dir = tempfile::tempdir().unwrap();
    let status = bin()
        .arg("wt")
        .arg(fixtures().join("f1.json"))
        .arg("--mu-max")
        .arg("3")
        .arg("--samples")
        .arg("4")
        .arg("--out")
        .arg(dir.path())
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(dir.path().join("wt_table.csv")).unwrap();
    assert!(csv.starts_with("re_mu,im_mu,re_nu,im_nu,re_Delta"));
}
