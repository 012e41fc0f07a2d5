//! Mean/mode, k-NN, MissForest and LLM imputation over masked cells.
//!
//! Imputers read only cells that are neither absent nor masked, take their
//! statistics from the training partition, and never use the target column
//! as a predictor.

mod knn;
mod llm;
mod mean_mode;
mod missforest;

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forest::ForestError;
use crate::gateway::{ChatExchange, GatewayError};
use crate::missingness::{MaskError, MissingnessMask};
use crate::prompting::PromptError;
use crate::table::{Cell, ColumnKind, Split, TableBundle, TableError};

pub use knn::{impute_knn, DEFAULT_K};
pub use llm::{impute_llm, LlmSettings};
pub use mean_mode::{column_fill, impute_mean_mode};
pub use missforest::{impute_missforest, MissForestParams, MAX_ITER_CAP};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    MeanMode,
    Knn,
    MissForest,
    LlmExpert,
    LlmNonExpert,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::MeanMode,
        Method::Knn,
        Method::MissForest,
        Method::LlmExpert,
        Method::LlmNonExpert,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::MeanMode => "mean_mode",
            Method::Knn => "knn",
            Method::MissForest => "missforest",
            Method::LlmExpert => "llm_expert",
            Method::LlmNonExpert => "llm_non_expert",
        }
    }

    pub fn uses_llm(self) -> bool {
        matches!(self, Method::LlmExpert | Method::LlmNonExpert)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = ImputeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| ImputeError::UnknownMethod(s.into()))
    }
}

#[derive(Debug, Error)]
pub enum ImputeError {
    #[error("unknown imputation method `{0}`")]
    UnknownMethod(String),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("column `{0}` has no observed training values")]
    FullyMasked(String),
    #[error("no training row with `{column}` observed is comparable to row {row}")]
    NoCandidates { row: usize, column: String },
    #[error("k must be at least 1")]
    InvalidK,
    #[error("imputation needs at least two feature columns besides the target, got {0}")]
    Degenerate(usize),
    #[error(transparent)]
    Forest(#[from] ForestError),
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error("gateway failure at cell ({row}, `{column}`): {source}")]
    Gateway {
        row: usize,
        column: String,
        source: GatewayError,
        partial: Box<ImputedTable>,
    },
}

/// One gateway round trip made while filling a cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellExchange {
    pub row: usize,
    pub column: String,
    pub attempt: u8,
    pub exchange: ChatExchange,
}

/// A table together with values for every masked cell.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedTable {
    pub base: TableBundle,
    pub method: Method,
    /// (row, column index) to imputed value.
    pub filled: BTreeMap<(usize, usize), Cell>,
    /// Cells where the mean/mode fallback replaced an unusable reply.
    pub failures: Vec<(usize, usize)>,
    pub exchanges: Vec<CellExchange>,
}

impl ImputedTable {
    pub fn new(base: TableBundle, method: Method) -> Self {
        Self {
            base,
            method,
            filled: BTreeMap::new(),
            failures: Vec::new(),
            exchanges: Vec::new(),
        }
    }

    pub fn get(&self, row: usize, column: usize) -> Option<Cell> {
        self.filled.get(&(row, column)).copied()
    }

    /// The base table with every filled cell written in.
    pub fn completed(&self) -> Result<TableBundle, TableError> {
        self.base
            .with_cells(self.filled.iter().map(|(&(r, c), &v)| (r, c, v)))
    }

    /// Checks that fills cover exactly the masked cells and fit the schema.
    pub fn check_against(&self, mask: &MissingnessMask) -> Result<(), String> {
        let expected = mask.coordinates(&self.base);
        if expected.len() != self.filled.len()
            || expected.iter().any(|k| !self.filled.contains_key(k))
        {
            return Err("filled cells differ from masked cells".into());
        }
        for (&(r, c), cell) in &self.filled {
            let col = self.base.column(c);
            let ok = match (col.kind, cell) {
                (ColumnKind::Continuous, Cell::Number(v)) => v.is_finite(),
                (ColumnKind::Categorical, Cell::Label(i)) => (*i as usize) < col.categories.len(),
                _ => false,
            };
            if !ok {
                return Err(alloc::format!("cell ({r}, `{}`) is not schema-valid", col.name));
            }
        }
        Ok(())
    }
}

/// Observed-value view: a cell counts only when present and not masked.
pub(crate) struct Observed<'a> {
    pub bundle: &'a TableBundle,
    pub hidden: Vec<Vec<bool>>,
}

impl<'a> Observed<'a> {
    pub fn new(bundle: &'a TableBundle, mask: &MissingnessMask) -> Result<Self, ImputeError> {
        mask.validate(bundle)?;
        let mut hidden = mask.dense(bundle);
        for (r, row) in bundle.rows().iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                hidden[r][c] |= cell.is_absent();
            }
        }
        Ok(Self { bundle, hidden })
    }

    pub fn get(&self, row: usize, column: usize) -> Option<Cell> {
        (!self.hidden[row][column]).then(|| self.bundle.cell(row, column))
    }
}

pub(crate) fn train_rows(split: &Split) -> Vec<usize> {
    let mut rows = split.train.clone();
    rows.sort_unstable();
    rows
}

/// Category index with the highest count; ties go to the lexicographically
/// smallest label.
pub(crate) fn mode_of(
    bundle: &TableBundle,
    column: usize,
    labels: impl IntoIterator<Item = u32>,
) -> Option<u32> {
    let schema = bundle.column(column);
    let mut counts = alloc::vec![0usize; schema.categories.len()];
    for l in labels {
        counts[l as usize] += 1;
    }
    (0..counts.len())
        .filter(|&i| counts[i] > 0)
        .min_by(|&a, &b| {
            counts[b]
                .cmp(&counts[a])
                .then_with(|| schema.categories[a].cmp(&schema.categories[b]))
        })
        .map(|i| i as u32)
}

/// Mean accumulated in the order given.
pub(crate) fn mean_of(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for v in values {
        sum += v;
        count += 1;
    }
    (count > 0).then(|| sum / count as f64)
}
