use std::fs;

use ewcl::experiment::{
    lambda_x, mean_accuracy, parse_summary_accuracy, read_records_csv, report, CellResult, SweepResult,
};
use ewcl_core::eval::{EvalRecord, Metric};

fn rec(metric: Metric, dataset: &str, tag: &str, lambda: Option<f64>, value: f64) -> EvalRecord {
    EvalRecord {
        metric,
        dataset: dataset.into(),
        tag: tag.into(),
        lambda,
        checkpoint: "ck".into(),
        value,
        n_items: 10,
    }
}

fn records_for(lambda: Option<f64>, shift: f64) -> Vec<EvalRecord> {
    vec![
        rec(Metric::Ppl, "heldout", "A", lambda, 2.0 + shift),
        rec(Metric::Ppl, "a-qa", "A", lambda, 3.0 + shift),
        rec(Metric::McAcc, "a-continuation", "A", lambda, 0.9 - shift / 10.0),
        rec(Metric::McAcc, "a-word-order", "A", lambda, 0.7),
        rec(Metric::Ppl, "heldout", "B", lambda, 40.0 - shift),
        rec(Metric::McAcc, "b-continuation", "B", lambda, 0.3 + shift / 10.0),
        rec(Metric::McAcc, "b-word-order", "B", lambda, 1.0 / 3.0),
    ]
}

fn cell(lambda: f64, records: Vec<EvalRecord>) -> CellResult {
    CellResult {
        lambda,
        checkpoint: Some("ck".into()),
        anchor_distance: Some(1.0),
        max_shift: Some(0.1),
        records,
        error: None,
    }
}

fn result() -> SweepResult {
    let mut gap = records_for(Some(1e2), 1.0);
    gap.retain(|r| r.dataset != "a-word-order");
    let mut failed = cell(1e12, Vec::new());
    failed.error = Some("diverged".into());
    failed.checkpoint = None;
    SweepResult {
        config_hash: "abc".into(),
        code_version: "0".into(),
        baseline: records_for(None, 0.0),
        cells: vec![cell(0.0, records_for(Some(0.0), 3.0)), cell(1e2, gap), cell(1e6, records_for(Some(1e6), 0.25)), failed],
    }
}

#[test]
fn curve_files_have_one_row_per_lambda() {
    let dir = tempfile::tempdir().unwrap();
    let files = report(&result(), dir.path()).unwrap();
    // ppl and mc_acc for A, ppl and mc_acc for B
    assert_eq!(files.curves.len(), 4);
    assert_eq!(files.plots.len(), 4);
    for c in &files.curves {
        let text = fs::read_to_string(c).unwrap();
        assert_eq!(text.lines().count(), 1 + 4, "{}", c.display());
    }
    for name in ["ppl_A.csv", "mc_acc_A.csv", "ppl_B.csv", "mc_acc_B.csv"] {
        assert!(dir.path().join("curves").join(name).exists(), "{name}");
    }
    let svg = fs::read_to_string(dir.path().join("plots/mc_acc_A.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

#[test]
fn missing_values_are_gaps_not_zeros() {
    let dir = tempfile::tempdir().unwrap();
    report(&result(), dir.path()).unwrap();
    let mut rdr = csv::Reader::from_path(dir.path().join("curves/mc_acc_A.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(String::from).collect();
    let col = header.iter().position(|h| h == "a-word-order").unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    assert_eq!(&rows[0][col], "0.7");
    assert_eq!(&rows[1][col], "");
    assert_eq!(&rows[3][col], "");
    let summary = fs::read_to_string(dir.path().join("summary.md")).unwrap();
    let table = parse_summary_accuracy(&summary);
    assert_eq!(table[&("1e12".to_string(), "A".to_string())], None);
    assert!(summary.contains("| 1e12 | n/a | n/a |"));
    assert!(summary.contains("diverged"));
}

#[test]
fn summary_accuracy_recomputes_from_records_csv() {
    let dir = tempfile::tempdir().unwrap();
    let res = result();
    report(&res, dir.path()).unwrap();
    let rows = read_records_csv(&dir.path().join("records.csv")).unwrap();
    let expected: Vec<&EvalRecord> = res.baseline.iter().chain(res.cells.iter().flat_map(|c| &c.records)).collect();
    assert_eq!(rows.len(), expected.len());
    assert!(rows.iter().zip(&expected).all(|(a, b)| a == *b));

    let table = parse_summary_accuracy(&fs::read_to_string(dir.path().join("summary.md")).unwrap());
    for ((label, tag), value) in &table {
        let lambda = match label.as_str() {
            "baseline" => None,
            l => Some(l.parse::<f64>().unwrap()),
        };
        let accs: Vec<f64> = rows
            .iter()
            .filter(|r| r.metric == Metric::McAcc && &r.tag == tag && r.lambda == lambda)
            .map(|r| r.value)
            .collect();
        match value {
            Some(v) => {
                let mean = accs.iter().sum::<f64>() / accs.len() as f64;
                assert!((v - mean).abs() < 1e-12, "{label} {tag}");
            }
            None => assert!(accs.is_empty()),
        }
    }
    assert_eq!(table.len(), 2 * (1 + res.cells.len()));
    assert_eq!(mean_accuracy(&res.cells[1].records, "A"), Some(0.8));
}

#[test]
fn zero_lambda_sits_left_of_the_grid() {
    let grid = [0.0, 1e2, 1e3, 1e12];
    assert_eq!(lambda_x(0.0, &grid), 1.0);
    assert_eq!(lambda_x(1e2, &grid), 2.0);
    assert_eq!(lambda_x(1e12, &grid), 12.0);
    assert_eq!(lambda_x(0.0, &[0.0, 3e4]), 3.0);
    assert_eq!(lambda_x(0.0, &[0.0]), 0.0);
}

#[test]
fn result_json_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("result.json");
    let res = result();
    res.save(&path).unwrap();
    assert_eq!(SweepResult::load(&path).unwrap(), res);
}
