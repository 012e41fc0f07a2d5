//! Downstream classification on imputed versus incomplete tables, plus the
//! cell-level imputation metrics.
//!
//! Cells the classifier must not see are encoded as sentinels: continuous
//! columns get the training minimum minus one, categorical columns an extra
//! level past the declared categories.

use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::forest::{FeatureColumn, FeatureMatrix, ForestError, ForestParams, RandomForest, Targets};
use crate::impute::ImputedTable;
use crate::metrics::{self, MetricError};
use crate::missingness::MissingnessMask;
use crate::records::EvalRecord;
use crate::table::{Cell, ColumnKind, Split, TableBundle};

pub const INCOMPLETE: &str = "incomplete";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DownstreamError {
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("no {0} rows with an observed target")]
    NoRows(&'static str),
}

/// Label of the extra sentinel level of a categorical feature.
pub const MISSING_LEVEL: &str = "MISSING";

/// Features of every row with hidden cells replaced by sentinels. Sentinel
/// constants come from training rows only.
pub fn encode_features(
    bundle: &TableBundle,
    split: &Split,
    hidden: &[Vec<bool>],
) -> FeatureMatrix {
    let n = bundle.n();
    let columns = bundle
        .feature_indices()
        .into_iter()
        .map(|c| {
            let visible = |r: usize| -> Option<Cell> {
                let cell = bundle.cell(r, c);
                (!hidden[r][c] && !cell.is_absent()).then_some(cell)
            };
            match bundle.column(c).kind {
                ColumnKind::Continuous => {
                    let min = split
                        .train
                        .iter()
                        .filter_map(|&r| visible(r)?.as_number())
                        .fold(f64::INFINITY, f64::min);
                    let sentinel = if min.is_finite() { min - 1.0 } else { -1.0 };
                    FeatureColumn::Continuous(
                        (0..n)
                            .map(|r| visible(r).and_then(|v| v.as_number()).unwrap_or(sentinel))
                            .collect(),
                    )
                }
                ColumnKind::Categorical => {
                    let levels = bundle.column(c).categories.len() as u32;
                    FeatureColumn::Categorical {
                        values: (0..n)
                            .map(|r| visible(r).and_then(|v| v.as_label()).unwrap_or(levels))
                            .collect(),
                        levels: levels + 1,
                    }
                }
            }
        })
        .collect();
    FeatureMatrix::new(columns, n)
}

/// Random forest classifier with the standard defaults. Needs two classes.
pub fn train_rf_classifier(
    x: &FeatureMatrix,
    labels: &[u32],
    classes: u32,
    params: &ForestParams,
    seed: u64,
) -> Result<RandomForest, ForestError> {
    if labels.iter().all(|&l| Some(&l) == labels.first()) {
        return Err(if labels.is_empty() {
            ForestError::EmptyTraining
        } else {
            ForestError::SingleClass
        });
    }
    let y = Targets::Classification {
        labels: labels.to_vec(),
        classes,
    };
    RandomForest::fit(x, &y, params, seed)
}

/// Holdout accuracy of a forest trained on the training rows of `bundle`
/// with `hidden` cells encoded as sentinels.
pub fn downstream_accuracy(
    bundle: &TableBundle,
    split: &Split,
    hidden: &[Vec<bool>],
    params: &ForestParams,
    seed: u64,
) -> Result<f64, DownstreamError> {
    let target = bundle.target_index();
    let labelled = |rows: &[usize]| -> Vec<usize> {
        rows.iter()
            .copied()
            .filter(|&r| bundle.cell(r, target).as_label().is_some())
            .collect()
    };
    let train = labelled(&split.train);
    let test = labelled(&split.test);
    if train.is_empty() {
        return Err(DownstreamError::NoRows("training"));
    }
    if test.is_empty() {
        return Err(DownstreamError::NoRows("test"));
    }
    let x = encode_features(bundle, split, hidden);
    let label = |r: usize| bundle.cell(r, target).as_label().unwrap_or(0);
    let y_train: Vec<u32> = train.iter().map(|&r| label(r)).collect();
    let classes = bundle.target().categories.len() as u32;
    let forest = train_rf_classifier(&x.select_rows(&train), &y_train, classes, params, seed)?;
    let x_test = x.select_rows(&test);
    let predicted: Vec<u32> = (0..test.len())
        .map(|i| match forest.predict(&x_test, i) {
            crate::forest::Prediction::Class(k) => k,
            crate::forest::Prediction::Value(_) => u32::MAX,
        })
        .collect();
    let truth: Vec<u32> = test.iter().map(|&r| label(r)).collect();
    Ok(metrics::accuracy(&truth, &predicted)?)
}

/// Hidden-cell grid for the incomplete baseline: masked cells stay hidden.
pub fn incomplete_view(bundle: &TableBundle, mask: &MissingnessMask) -> Vec<Vec<bool>> {
    mask.dense(bundle)
}

/// Hidden-cell grid for an imputed table: nothing beyond native absences.
pub fn imputed_view(bundle: &TableBundle) -> Vec<Vec<bool>> {
    alloc::vec![alloc::vec![false; bundle.p()]; bundle.n()]
}

/// RMSE/NRMSE per continuous column and F1 per categorical column against the
/// held-out ground truth. Undefined NRMSE values are omitted.
pub fn imputation_metrics(bundle: &TableBundle, imputed: &ImputedTable) -> Vec<EvalRecord> {
    let mut out = Vec::new();
    let method = imputed.method.id();
    let record = |metric: &str, column: &str, value: f64| {
        EvalRecord::new(bundle.name(), bundle.domain(), method, metric, Some(column), value)
    };
    for c in 0..bundle.p() {
        let col = bundle.column(c);
        let pairs: Vec<(Cell, Cell)> = imputed
            .filled
            .iter()
            .filter(|((_, cc), _)| *cc == c)
            .map(|(&(r, _), &v)| (bundle.cell(r, c), v))
            .filter(|(truth, _)| !truth.is_absent())
            .collect();
        if pairs.is_empty() {
            continue;
        }
        match col.kind {
            ColumnKind::Continuous => {
                let truth: Vec<f64> = pairs.iter().filter_map(|p| p.0.as_number()).collect();
                let guess: Vec<f64> = pairs.iter().filter_map(|p| p.1.as_number()).collect();
                if let Ok(v) = metrics::rmse(&truth, &guess) {
                    out.push(record("rmse", &col.name, v));
                }
                if let Ok(Some(v)) = metrics::nrmse(&truth, &guess) {
                    out.push(record("nrmse", &col.name, v));
                }
            }
            ColumnKind::Categorical => {
                let render = |cell: &Cell| -> String { col.render(cell) };
                let truth: Vec<String> = pairs.iter().map(|p| render(&p.0)).collect();
                let guess: Vec<String> = pairs.iter().map(|p| render(&p.1)).collect();
                if let Ok(v) = metrics::f1(&truth, &guess) {
                    out.push(record("f1", &col.name, v));
                }
                if let Ok(v) = metrics::f1_macro(&truth, &guess) {
                    out.push(record("f1_macro", &col.name, v));
                }
            }
        }
    }
    if !imputed.filled.is_empty() {
        let rate = imputed.failures.len() as f64 / imputed.filled.len() as f64;
        if imputed.method.uses_llm() {
            out.push(EvalRecord::new(
                bundle.name(),
                bundle.domain(),
                method,
                "parse_failure_rate",
                None,
                rate,
            ));
        }
    }
    out
}

/// Downstream accuracy for the incomplete baseline and every imputed table,
/// with the relative improvement over the sentinel baseline and, for
/// sensitivity, over the mean/mode-filled table when one is supplied.
pub fn downstream_records(
    bundle: &TableBundle,
    split: &Split,
    mask: &MissingnessMask,
    imputed: &[ImputedTable],
    params: &ForestParams,
    seed: u64,
) -> Result<Vec<EvalRecord>, DownstreamError> {
    let rec = |method: &str, metric: &str, value: f64| {
        EvalRecord::new(bundle.name(), bundle.domain(), method, metric, None, value)
    };
    let baseline = downstream_accuracy(bundle, split, &incomplete_view(bundle, mask), params, seed)?;
    let mut out = alloc::vec![rec(INCOMPLETE, "accuracy", baseline)];
    let mut scores = Vec::with_capacity(imputed.len());
    for table in imputed {
        let completed = table
            .completed()
            .expect("imputed values were validated against the schema");
        let score = downstream_accuracy(&completed, split, &imputed_view(&completed), params, seed)?;
        scores.push((table.method, score));
    }
    let mean_fill = scores
        .iter()
        .find(|(m, _)| *m == crate::impute::Method::MeanMode)
        .map(|&(_, s)| s);
    for (method, score) in scores {
        out.push(rec(method.id(), "accuracy", score));
        if let Ok(v) = metrics::downstream_improvement(score, baseline) {
            out.push(rec(method.id(), "downstream_improvement", v));
        }
        if let Some(Ok(v)) = mean_fill.map(|m| metrics::downstream_improvement(score, m)) {
            out.push(rec(method.id(), "downstream_improvement_vs_mean_fill", v));
        }
    }
    Ok(out)
}
