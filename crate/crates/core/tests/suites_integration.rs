//! Suite-level behavior that needs real fixtures: falsification runs,
//! determinism of artifacts, scenario plumbing.

use std::path::{Path, PathBuf};

use stackeldn::stackel::{column_gauge, load_fixture, ConformalMetric, Fixture};
use stackeldn::suites::{
    run_scenario, BoundaryIdSuite, SpectrumDensitySuite, Suite, SuiteContext,
};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn ctx(fixture: Fixture, fixture2: Option<Fixture>, out: PathBuf) -> SuiteContext {
    SuiteContext::new(fixture, fixture2, 24, 64, None, 0, out)
}

#[test]
fn boundary_id_passes_on_gauged_pair_and_detects_perturbation() {
    let base = load_fixture(&fixtures().join("f1.json")).unwrap();
    let dir = tempfile::tempdir().unwrap();

    // constructed equivalent partner (internal default is a column gauge)
    let report = BoundaryIdSuite
        .run(&ctx(
            load_fixture(&fixtures().join("f1.json")).unwrap(),
            None,
            dir.path().to_path_buf(),
        ))
        .unwrap();
    assert!(report.pass(), "gauged pair should pass: {report:?}");

    // perturbed s33: the identities must detect the difference
    let perturbed_metric = {
        let gauged = column_gauge(&base.metric.stackel, [[1.0, 0.0], [0.1, 1.0]]).unwrap();
        let mut rows: Vec<[stackeldn::curve::Curve; 3]> = Vec::new();
        for i in 0..3 {
            rows.push([
                gauged.entry(i, 0).clone(),
                gauged.entry(i, 1).clone(),
                if i == 2 {
                    stackeldn::stackel::ComboFn::new(vec![
                        (1.0, gauged.entry(2, 2).clone()),
                        (0.1, stackeldn::curve::constant(-1.0)),
                    ]) as stackeldn::curve::Curve
                } else {
                    gauged.entry(i, 2).clone()
                },
            ]);
        }
        let rows: [[stackeldn::curve::Curve; 3]; 3] =
            [rows.remove(0), rows.remove(0), rows.remove(0)];
        ConformalMetric {
            stackel: stackeldn::stackel::StackelMatrix::new(rows, 1.0),
            phi: base.metric.phi.clone(),
            c: base.metric.c.clone(),
        }
    };
    let partner = Fixture {
        metric: perturbed_metric,
        name: "perturbed".into(),
        sha256: "perturbed".into(),
    };
    let report = BoundaryIdSuite
        .run(&ctx(base, Some(partner), dir.path().to_path_buf()))
        .unwrap();
    assert!(
        !report.pass(),
        "perturbed partner must be reported DIFFERENT: {report:?}"
    );
    // specifically the metric/boundary identities break
    let broken = report.rows.iter().filter(|r| !r.pass()).count();
    assert!(broken >= 1);
}

#[test]
fn density_suite_artifacts_are_deterministic() {
    let run_once = |dir: &Path| -> (String, String) {
        let report = SpectrumDensitySuite
            .run(&ctx(
                load_fixture(&fixtures().join("f1.json")).unwrap(),
                None,
                dir.to_path_buf(),
            ))
            .unwrap();
        assert!(report.pass());
        (
            std::fs::read_to_string(dir.join("spectrum.csv")).unwrap(),
            serde_json::to_string(&report.rows.iter().map(|r| &r.name).collect::<Vec<_>>())
                .unwrap(),
        )
    };
    let d1 = tempfile::tempdir().unwrap();
    let d2 = tempfile::tempdir().unwrap();
    let (csv1, names1) = run_once(d1.path());
    let (csv2, names2) = run_once(d2.path());
    assert_eq!(csv1, csv2, "spectrum.csv must be byte-identical across runs");
    assert_eq!(names1, names2);
}

#[test]
fn run_scenario_writes_report() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("scenario.json");
    std::fs::write(
        &scenario,
        format!(
            r#"{{"suite":"spectrum-density","fixture":"{}","out":"{}"}}"#,
            fixtures().join("f1.json").display(),
            dir.path().join("out").display()
        ),
    )
    .unwrap();
    let outcome = run_scenario(&scenario).unwrap();
    assert!(outcome.pass());
    let report = std::fs::read_to_string(outcome.report_path).unwrap();
    assert!(report.contains("worst_margin"));
    assert!(report.contains("tolerance"));
}
