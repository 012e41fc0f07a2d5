//! The `evaluate` command: tables and charts from run directories.

use std::path::{Path, PathBuf};

use llmexpert_core::downstream::INCOMPLETE;
use llmexpert_core::EvalRecord;

use crate::fsutil::{read_jsonl, write_atomic, write_jsonl};
use crate::impute::METRICS_FILE;
use crate::manifest::{Manifest, RunStatus};
use crate::svg::BarChart;
use crate::{io_at, CliError};

pub const REPORT_DIR: &str = "report";
const NO_DOMAIN: &str = "unspecified";

/// Insertion-ordered distinct values.
fn distinct<'a>(items: impl Iterator<Item = &'a str>) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for s in items {
        if !out.iter().any(|x| x == s) {
            out.push(s.to_string());
        }
    }
    out
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn fmt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_default()
}

fn domain_of(r: &EvalRecord) -> &str {
    r.domain.as_deref().unwrap_or(NO_DOMAIN)
}

struct Report<'a> {
    records: &'a [EvalRecord],
    datasets: Vec<String>,
    domains: Vec<String>,
    methods: Vec<String>,
}

impl<'a> Report<'a> {
    fn new(records: &'a [EvalRecord]) -> Self {
        Self {
            datasets: distinct(records.iter().map(|r| r.dataset.as_str())),
            domains: distinct(records.iter().map(domain_of)),
            methods: distinct(records.iter().map(|r| r.method.as_str()).filter(|m| *m != INCOMPLETE)),
            records,
        }
    }

    fn values(&self, pred: impl Fn(&EvalRecord) -> bool) -> Vec<f64> {
        self.records.iter().filter(|r| pred(r)).map(|r| r.value).collect()
    }

    fn domain(&self, dataset: &str) -> &str {
        self.records
            .iter()
            .find(|r| r.dataset == dataset)
            .map(domain_of)
            .unwrap_or(NO_DOMAIN)
    }

    /// Per dataset and method: mean over columns.
    fn column_table(&self, metric: &str) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["dataset", "domain", "method", metric, "columns"]).expect("in memory");
        for d in &self.datasets {
            for m in &self.methods {
                let v = self.values(|r| &r.dataset == d && &r.method == m && r.metric == metric);
                if v.is_empty() {
                    continue;
                }
                w.write_record([d, self.domain(d), m, &fmt(mean(&v)), &v.len().to_string()])
                    .expect("in memory");
            }
        }
        w.into_inner().expect("in memory")
    }

    fn downstream_table(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "dataset",
            "domain",
            "method",
            "accuracy",
            "downstream_improvement",
            "downstream_improvement_vs_mean_fill",
        ])
        .expect("in memory");
        for d in &self.datasets {
            let one = |m: &str, metric: &str| mean(&self.values(|r| &r.dataset == d && r.method == m && r.metric == metric));
            if let Some(acc) = one(INCOMPLETE, "accuracy") {
                w.write_record([d, self.domain(d), INCOMPLETE, &fmt(Some(acc)), "", ""]).expect("in memory");
            }
            for m in &self.methods {
                let acc = one(m, "accuracy");
                if acc.is_none() {
                    continue;
                }
                w.write_record([
                    d,
                    self.domain(d),
                    m,
                    &fmt(acc),
                    &fmt(one(m, "downstream_improvement")),
                    &fmt(one(m, "downstream_improvement_vs_mean_fill")),
                ])
                .expect("in memory");
            }
        }
        w.into_inner().expect("in memory")
    }

    /// Domain x method means of per-dataset means.
    fn by_domain(&self, metric: &str) -> Vec<Vec<Option<f64>>> {
        self.domains
            .iter()
            .map(|dom| {
                self.methods
                    .iter()
                    .map(|m| {
                        let per_dataset: Vec<f64> = self
                            .datasets
                            .iter()
                            .filter(|d| self.domain(d) == dom)
                            .filter_map(|d| mean(&self.values(|r| &r.dataset == d && &r.method == m && r.metric == metric)))
                            .collect();
                        mean(&per_dataset)
                    })
                    .collect()
            })
            .collect()
    }
}

const DOMAIN_METRICS: [(&str, &str, &str); 3] = [
    ("nrmse", "NRMSE by domain", "mean NRMSE"),
    ("f1_macro", "Macro F1 by domain", "mean macro F1"),
    ("downstream_improvement", "Downstream improvement by domain", "relative change in accuracy"),
];

/// Reads every run's metrics and writes the report; returns the files written.
pub fn run_evaluate(runs: &[PathBuf], out: Option<&Path>) -> Result<Vec<PathBuf>, CliError> {
    if runs.is_empty() {
        return Err(CliError::Config("no run directories given".into()));
    }
    let mut records = Vec::new();
    for run in runs {
        let manifest = Manifest::read(run)?;
        if manifest.status != RunStatus::Complete {
            return Err(CliError::Config(format!(
                "{}: run is {:?}, not complete",
                run.display(),
                manifest.status
            )));
        }
        let path = run.join(METRICS_FILE);
        if !path.is_file() {
            return Err(CliError::Config(format!("{}: missing", path.display())));
        }
        records.extend(read_jsonl::<EvalRecord>(&path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?);
    }
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| runs[0].join(REPORT_DIR));
    let report = Report::new(&records);

    let mut files: Vec<(&str, Vec<u8>)> = vec![
        ("nrmse.csv", report.column_table("nrmse")),
        ("f1.csv", report.column_table("f1_macro")),
        ("downstream.csv", report.downstream_table()),
    ];
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["domain", "method", "metric", "value"]).expect("in memory");
    let mut charts = Vec::new();
    for (metric, title, label) in DOMAIN_METRICS {
        let grid = report.by_domain(metric);
        for (dom, row) in report.domains.iter().zip(&grid) {
            for (m, v) in report.methods.iter().zip(row) {
                if v.is_some() {
                    w.write_record([dom.as_str(), m, metric, &fmt(*v)]).expect("in memory");
                }
            }
        }
        let svg = BarChart {
            title,
            y_label: label,
            groups: &report.domains,
            series: &report.methods,
            values: &grid,
        }
        .render();
        charts.push((metric, svg));
    }
    files.push(("by_domain.csv", w.into_inner().expect("in memory")));

    let mut written = Vec::new();
    for (name, bytes) in files {
        let path = out.join(name);
        write_atomic(&path, &bytes).map_err(io_at(&path))?;
        written.push(path);
    }
    for (metric, svg) in charts {
        let path = out.join(format!("{metric}_by_domain.svg"));
        write_atomic(&path, svg.as_bytes()).map_err(io_at(&path))?;
        written.push(path);
    }
    let path = out.join(METRICS_FILE);
    write_jsonl(&path, &records).map_err(io_at(&path))?;
    written.push(path);
    Ok(written)
}
