use alloc::vec::Vec;

use crate::forest::{FeatureColumn, FeatureMatrix, ForestParams, Prediction, RandomForest, Targets};
use crate::missingness::MissingnessMask;
use crate::rng::derive_seed;
use crate::table::{Cell, ColumnKind, Split, TableBundle};

use super::mean_mode::fill_for;
use super::{train_rows, ImputeError, ImputedTable, Method, Observed};

pub const MAX_ITER_CAP: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MissForestParams {
    pub trees: usize,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for MissForestParams {
    fn default() -> Self {
        Self {
            trees: 100,
            max_iter: MAX_ITER_CAP,
            seed: 0,
        }
    }
}

struct Work<'a> {
    bundle: &'a TableBundle,
    /// Non-target column indices.
    features: Vec<usize>,
    /// Current values, `[feature position][row]`.
    values: Vec<Vec<Cell>>,
}

impl Work<'_> {
    fn matrix(&self, skip: usize) -> FeatureMatrix {
        let n = self.bundle.n();
        let columns = (0..self.features.len())
            .filter(|&j| j != skip)
            .map(|j| {
                let schema = self.bundle.column(self.features[j]);
                let col = &self.values[j];
                match schema.kind {
                    ColumnKind::Continuous => FeatureColumn::Continuous(
                        col.iter().map(|c| c.as_number().unwrap_or(0.0)).collect(),
                    ),
                    ColumnKind::Categorical => FeatureColumn::Categorical {
                        values: col.iter().map(|c| c.as_label().unwrap_or(0)).collect(),
                        levels: schema.categories.len() as u32,
                    },
                }
            })
            .collect();
        FeatureMatrix::new(columns, n)
    }
}

/// Normalised change on continuous cells and disagreement rate on
/// categorical cells between two iterates.
fn change(work: &Work<'_>, old: &[Vec<Cell>], hidden: &[Vec<usize>]) -> (f64, f64) {
    let (mut num, mut den) = (0.0, 0.0);
    let (mut changed, mut total) = (0usize, 0usize);
    for (j, &c) in work.features.iter().enumerate() {
        match work.bundle.column(c).kind {
            ColumnKind::Continuous => {
                for v in &work.values[j] {
                    let v = v.as_number().unwrap_or(0.0);
                    den += v * v;
                }
                for &r in &hidden[j] {
                    let d = work.values[j][r].as_number().unwrap_or(0.0)
                        - old[j][r].as_number().unwrap_or(0.0);
                    num += d * d;
                }
            }
            ColumnKind::Categorical => {
                total += hidden[j].len();
                changed += hidden[j]
                    .iter()
                    .filter(|&&r| work.values[j][r] != old[j][r])
                    .count();
            }
        }
    }
    let continuous = if num == 0.0 { 0.0 } else { num / den };
    let categorical = if total == 0 {
        0.0
    } else {
        changed as f64 / total as f64
    };
    (continuous, categorical)
}

/// Iterative random-forest imputation. Starts from mean/mode, refits each
/// incomplete column on its observed training rows in ascending order of
/// missingness, and stops once neither change measure decreases, returning
/// the iterate before the increase.
pub fn impute_missforest(
    bundle: &TableBundle,
    split: &Split,
    mask: &MissingnessMask,
    params: MissForestParams,
) -> Result<ImputedTable, ImputeError> {
    let observed = Observed::new(bundle, mask)?;
    let features = bundle.feature_indices();
    if features.len() < 2 {
        return Err(ImputeError::Degenerate(features.len()));
    }
    let train = train_rows(split);
    let n = bundle.n();
    let hidden: Vec<Vec<usize>> = features
        .iter()
        .map(|&c| (0..n).filter(|&r| observed.get(r, c).is_none()).collect())
        .collect();
    let mut values = Vec::with_capacity(features.len());
    for (j, &c) in features.iter().enumerate() {
        let mut col: Vec<Cell> = (0..n).map(|r| bundle.cell(r, c)).collect();
        if !hidden[j].is_empty() {
            let init = fill_for(&observed, &train, c)?;
            for &r in &hidden[j] {
                col[r] = init;
            }
        }
        values.push(col);
    }
    let mut work = Work {
        bundle,
        features,
        values,
    };

    let mut order: Vec<usize> = (0..work.features.len())
        .filter(|&j| !hidden[j].is_empty())
        .collect();
    order.sort_by_key(|&j| (hidden[j].len(), j));

    let forest_trees = params.trees.max(1);
    let max_iter = params.max_iter.min(MAX_ITER_CAP);
    let mut best_change = (f64::INFINITY, f64::INFINITY);
    let mut iter = 0;
    while iter < max_iter && !order.is_empty() {
        let old = work.values.clone();
        for &j in &order {
            let c = work.features[j];
            let fit_rows: Vec<usize> = train
                .iter()
                .copied()
                .filter(|&r| observed.get(r, c).is_some())
                .collect();
            let x = work.matrix(j);
            let x_fit = x.select_rows(&fit_rows);
            let targets = match bundle.column(c).kind {
                ColumnKind::Continuous => Targets::Regression(
                    fit_rows
                        .iter()
                        .map(|&r| work.values[j][r].as_number().unwrap_or(0.0))
                        .collect(),
                ),
                ColumnKind::Categorical => Targets::Classification {
                    labels: fit_rows
                        .iter()
                        .map(|&r| work.values[j][r].as_label().unwrap_or(0))
                        .collect(),
                    classes: bundle.column(c).categories.len() as u32,
                },
            };
            let forest_params = ForestParams::for_targets(&targets).with_trees(forest_trees);
            let seed = derive_seed(params.seed, (iter * work.features.len() + j) as u64);
            let forest = RandomForest::fit(&x_fit, &targets, &forest_params, seed)?;
            for &r in &hidden[j] {
                work.values[j][r] = match forest.predict(&x, r) {
                    Prediction::Value(v) => Cell::Number(v),
                    Prediction::Class(k) => Cell::Label(k),
                };
            }
        }
        iter += 1;
        let delta = change(&work, &old, &hidden);
        if !(delta.0 < best_change.0 || delta.1 < best_change.1) {
            work.values = old;
            break;
        }
        best_change = delta;
    }

    let mut out = ImputedTable::new(bundle.clone(), Method::MissForest);
    for (r, c) in mask.coordinates(bundle) {
        let j = work
            .features
            .iter()
            .position(|&f| f == c)
            .expect("target column is never masked");
        out.filled.insert((r, c), work.values[j][r]);
    }
    Ok(out)
}
