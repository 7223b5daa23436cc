use kdlab::config::Scale;
use kdlab::experiments::{parse_experiment, run_experiment, ExperimentKind, RunContext};
use kdlab::report::{emit_report, parse_csv_records, write_csv_records, Format, NullSink, Report, ReportBuilder};
use serde_json::json;

fn small_report() -> Report {
    let config = r#"{
        "params": {
            "data": { "source": "synthetic", "n_train": 30, "n_test": 20, "d": 3 },
            "alpha_grid": [0.0, 0.5, 1.0],
            "students": 40
        }
    }"#;
    let loaded = parse_experiment(ExperimentKind::TeacherNoiseSweep, config).unwrap();
    let ctx = RunContext {
        seed: 3,
        scale: Scale::default(),
        sink: &mut NullSink,
    };
    run_experiment(&loaded.experiment, ctx).unwrap()
}

fn empty_report() -> Report {
    let mut sink = NullSink;
    ReportBuilder::new("empty", 1, json!({}), &["alpha", "v_inter"], &mut sink).unwrap().finish()
}

#[test]
fn report_without_rows_is_a_bare_header() {
    assert_eq!(empty_report().csv_string(), "alpha,v_inter\n");
}

#[test]
fn csv_survives_parse_and_reemit() {
    let text = small_report().csv_string();
    let (header, rows) = parse_csv_records(&text).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(write_csv_records(&header, &rows), text);
}

#[test]
fn svg_is_well_formed() {
    for report in [small_report(), empty_report()] {
        let svg = report.svg_string();
        let doc = roxmltree::Document::parse(&svg).unwrap_or_else(|e| panic!("{}: {e}", report.experiment));
        assert_eq!(doc.root_element().tag_name().name(), "svg");
    }
}

#[test]
fn emitted_files_match_in_memory_renderings() {
    let report = small_report();
    let dir = tempfile::tempdir().unwrap();
    let paths = emit_report(&report, &[Format::Csv, Format::Json, Format::Svg], dir.path()).unwrap();
    assert_eq!(paths.len(), 3);
    assert_eq!(std::fs::read_to_string(&paths[0]).unwrap(), report.csv_string());
    let json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&paths[1]).unwrap()).unwrap();
    assert_eq!(json["experiment"], report.experiment);
    assert_eq!(std::fs::read_to_string(&paths[2]).unwrap(), report.svg_string());
}
