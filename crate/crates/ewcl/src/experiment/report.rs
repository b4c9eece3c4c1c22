use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use ewcl_core::eval::{EvalRecord, Metric};

use super::run::SweepResult;
use super::svg::{LinePlot, Series};
use crate::error::{Error, IoContext, Result};
use crate::io::write_atomic;

pub const RECORD_COLUMNS: [&str; 7] = ["metric", "dataset", "tag", "lambda", "checkpoint", "value", "n_items"];

/// Files written by [`report`].
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFiles {
    pub records_csv: PathBuf,
    pub curves: Vec<PathBuf>,
    pub plots: Vec<PathBuf>,
    pub summary: PathBuf,
}

/// x position of λ on the log axis; λ = 0 sits one decade left of the
/// smallest positive λ.
pub fn lambda_x(lambda: f64, lambdas: &[f64]) -> f64 {
    if lambda > 0.0 {
        return lambda.log10();
    }
    let min_pos = lambdas.iter().copied().filter(|l| *l > 0.0).fold(f64::INFINITY, f64::min);
    if min_pos.is_finite() {
        min_pos.log10().floor() - 1.0
    } else {
        0.0
    }
}

pub fn lambda_label(lambda: f64) -> String {
    if lambda == 0.0 {
        "0".into()
    } else {
        format!("{lambda:e}")
    }
}

fn all_records(result: &SweepResult) -> impl Iterator<Item = &EvalRecord> {
    result.baseline.iter().chain(result.cells.iter().flat_map(|c| &c.records))
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format { path: path.to_path_buf(), msg: e.to_string() }
}

pub fn write_records_csv(path: &Path, records: &[&EvalRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(RECORD_COLUMNS).map_err(|e| csv_error(path, e))?;
    for r in records {
        let lambda = r.lambda.map(|l| l.to_string()).unwrap_or_default();
        w.write_record([
            r.metric.name(),
            &r.dataset,
            &r.tag,
            &lambda,
            &r.checkpoint,
            &r.value.to_string(),
            &r.n_items.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Format { path: path.to_path_buf(), msg: e.to_string() })?;
    write_atomic(path, &bytes)
}

pub fn read_records_csv(path: &Path) -> Result<Vec<EvalRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    let mut out = Vec::new();
    for (i, row) in r.records().enumerate() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let bad = |msg: &str| Error::Line { path: path.to_path_buf(), line: i + 2, msg: msg.to_string() };
        if row.len() != RECORD_COLUMNS.len() {
            return Err(bad("wrong number of columns"));
        }
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad("bad number"));
        out.push(EvalRecord {
            metric: Metric::parse(&row[0]).ok_or_else(|| bad("unknown metric"))?,
            dataset: row[1].to_string(),
            tag: row[2].to_string(),
            lambda: if row[3].is_empty() { None } else { Some(num(&row[3])?) },
            checkpoint: row[4].to_string(),
            value: num(&row[5])?,
            n_items: row[6].parse().map_err(|_| bad("bad count"))?,
        });
    }
    Ok(out)
}

/// Unweighted mean of the per-benchmark accuracies in `records` for one tag.
pub fn mean_accuracy<'a>(records: impl IntoIterator<Item = &'a EvalRecord>, tag: &str) -> Option<f64> {
    let accs: Vec<f64> =
        records.into_iter().filter(|r| r.metric == Metric::McAcc && r.tag == tag).map(|r| r.value).collect();
    (!accs.is_empty()).then(|| accs.iter().sum::<f64>() / accs.len() as f64)
}

fn cell_value(records: &[EvalRecord], metric: Metric, tag: &str, dataset: &str) -> Option<f64> {
    records.iter().find(|r| r.metric == metric && r.tag == tag && r.dataset == dataset).map(|r| r.value)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Writes `records.csv`, `curves/`, `plots/` and `summary.md` under `dir`.
pub fn report(result: &SweepResult, dir: &Path) -> Result<ReportFiles> {
    fs::create_dir_all(dir).at(dir)?;
    let records: Vec<&EvalRecord> = all_records(result).collect();
    let records_csv = dir.join("records.csv");
    write_records_csv(&records_csv, &records)?;

    let lambdas: Vec<f64> = result.cells.iter().map(|c| c.lambda).collect();
    let mut keys: BTreeMap<(Metric, String), BTreeSet<String>> = BTreeMap::new();
    for r in &records {
        keys.entry((r.metric, r.tag.clone())).or_default().insert(r.dataset.clone());
    }

    let mut curves = Vec::new();
    let mut plots = Vec::new();
    for ((metric, tag), datasets) in &keys {
        let stem = format!("{}_{tag}", metric.name());
        let mut csv = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["lambda".to_string(), "x".into(), "label".into()];
        header.extend(datasets.iter().cloned());
        header.push("mean".into());
        let path = dir.join("curves").join(format!("{stem}.csv"));
        csv.write_record(&header).map_err(|e| csv_error(&path, e))?;
        let mut series: Vec<Series> = datasets.iter().map(|d| Series::new(d)).collect();
        for cell in &result.cells {
            let x = lambda_x(cell.lambda, &lambdas);
            let values: Vec<Option<f64>> =
                datasets.iter().map(|d| cell_value(&cell.records, *metric, tag, d)).collect();
            let present: Vec<f64> = values.iter().flatten().copied().collect();
            let mean = (!present.is_empty()).then(|| present.iter().sum::<f64>() / present.len() as f64);
            let mut row = vec![cell.lambda.to_string(), x.to_string(), lambda_label(cell.lambda)];
            row.extend(values.iter().map(|v| fmt_opt(*v)));
            row.push(fmt_opt(mean));
            csv.write_record(&row).map_err(|e| csv_error(&path, e))?;
            for (s, v) in series.iter_mut().zip(&values) {
                s.points.push((x, *v));
            }
        }
        for (s, d) in series.iter_mut().zip(datasets) {
            s.reference = cell_value(&result.baseline, *metric, tag, d);
        }
        let bytes = csv.into_inner().map_err(|e| Error::Format { path: path.clone(), msg: e.to_string() })?;
        write_atomic(&path, &bytes)?;
        curves.push(path);

        let plot = LinePlot {
            title: format!("{} ({tag})", metric.name()),
            x_ticks: result.cells.iter().map(|c| (lambda_x(c.lambda, &lambdas), lambda_label(c.lambda))).collect(),
            x_label: "lambda".into(),
            y_label: metric.name().into(),
            log_y: *metric != Metric::McAcc,
            series,
        };
        let path = dir.join("plots").join(format!("{stem}.svg"));
        write_atomic(&path, plot.render().as_bytes())?;
        plots.push(path);
    }

    let summary = dir.join("summary.md");
    write_atomic(&summary, summary_markdown(result, &keys).as_bytes())?;
    Ok(ReportFiles { records_csv, curves, plots, summary })
}

fn summary_markdown(result: &SweepResult, keys: &BTreeMap<(Metric, String), BTreeSet<String>>) -> String {
    let tags: BTreeSet<&str> = keys.keys().map(|(_, t)| t.as_str()).collect();
    let mut s = String::new();
    writeln!(s, "# Sweep summary\n").unwrap();
    writeln!(s, "config hash `{}`, ewcl {}\n", result.config_hash, result.code_version).unwrap();
    writeln!(s, "## Mean multiple-choice accuracy\n").unwrap();
    let header: Vec<&str> = tags.iter().copied().collect();
    writeln!(s, "| lambda | {} |", header.join(" | ")).unwrap();
    writeln!(s, "|---|{}", "---|".repeat(header.len())).unwrap();
    let mut rows: Vec<(String, &[EvalRecord])> = vec![("baseline".into(), &result.baseline)];
    rows.extend(result.cells.iter().map(|c| (lambda_label(c.lambda), c.records.as_slice())));
    for (label, records) in &rows {
        let cells: Vec<String> = header.iter().map(|t| table_cell(mean_accuracy(records.iter(), t))).collect();
        writeln!(s, "| {label} | {} |", cells.join(" | ")).unwrap();
    }
    for ((metric, tag), datasets) in keys {
        if *metric == Metric::McAcc {
            continue;
        }
        writeln!(s, "\n## {} ({tag})\n", metric.name()).unwrap();
        let ds: Vec<&str> = datasets.iter().map(String::as_str).collect();
        writeln!(s, "| lambda | {} |", ds.join(" | ")).unwrap();
        writeln!(s, "|---|{}", "---|".repeat(ds.len())).unwrap();
        for (label, records) in &rows {
            let cells: Vec<String> = ds.iter().map(|d| table_cell(cell_value(records, *metric, tag, d))).collect();
            writeln!(s, "| {label} | {} |", cells.join(" | ")).unwrap();
        }
    }
    let failed: Vec<_> = result.cells.iter().filter(|c| c.error.is_some()).collect();
    if !failed.is_empty() {
        writeln!(s, "\n## Failed cells\n").unwrap();
        for c in failed {
            writeln!(s, "- lambda {}: {}", lambda_label(c.lambda), c.error.as_deref().unwrap_or_default()).unwrap();
        }
    }
    s
}

fn table_cell(v: Option<f64>) -> String {
    v.map(|v| v.to_string()).unwrap_or_else(|| "n/a".into())
}

/// Parses the mean-accuracy table of a summary back into `(row label, tag) → value`.
pub fn parse_summary_accuracy(markdown: &str) -> BTreeMap<(String, String), Option<f64>> {
    let mut out = BTreeMap::new();
    let mut lines = markdown.lines().skip_while(|l| !l.starts_with("## Mean multiple-choice accuracy"));
    let Some(header) = lines.nth(2) else { return out };
    let tags: Vec<String> = split_row(header).into_iter().skip(1).collect();
    for line in lines.skip(1).take_while(|l| l.starts_with('|')) {
        let cells = split_row(line);
        for (tag, v) in tags.iter().zip(&cells[1..]) {
            out.insert((cells[0].clone(), tag.clone()), v.parse().ok());
        }
    }
    out
}

fn split_row(line: &str) -> Vec<String> {
    line.trim().trim_matches('|').split('|').map(|c| c.trim().to_string()).collect()
}
