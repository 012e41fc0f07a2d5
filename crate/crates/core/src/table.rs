//! Mixed continuous/categorical tables, train/test splits and bundle digests.
//!
//! A [`TableBundle`] is immutable once built: the constructor validates the
//! schema against every cell, and derived tables are produced through
//! [`TableBundle::with_cells`].

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TableError {
    #[error("table has no rows")]
    EmptyTable,
    #[error("table has no columns")]
    NoColumns,
    #[error("column name must not be empty")]
    EmptyColumnName,
    #[error("duplicate column name `{0}`")]
    DuplicateColumn(String),
    #[error("categorical column `{0}` declares no categories")]
    NoCategories(String),
    #[error("categorical column `{0}` declares category `{1}` twice")]
    DuplicateCategory(String, String),
    #[error("value `{value}` is not a category of column `{column}`")]
    UnknownCategory { column: String, value: String },
    #[error("row {row} has {found} cells, schema has {expected}")]
    RowWidth {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("row {row}, column `{column}`: cell does not match the column kind")]
    KindMismatch { row: usize, column: String },
    #[error("row {row}, column `{column}`: `{value}` is not a finite number")]
    NotANumber {
        row: usize,
        column: String,
        value: String,
    },
    #[error("target column `{0}` does not exist")]
    MissingTarget(String),
    #[error("target column `{0}` is not categorical")]
    TargetNotCategorical(String),
    #[error("dataset description must not be empty")]
    EmptyDescription,
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("row {0} is out of range")]
    RowOutOfRange(usize),
    #[error("at least two rows are required to split, got {0}")]
    TooFewRows(usize),
    #[error("split fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    Continuous,
    Categorical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnSchema {
    pub name: String,
    pub kind: ColumnKind,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub units: Option<String>,
}

impl ColumnSchema {
    pub fn continuous(name: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Continuous,
            categories: Vec::new(),
            units: None,
        }
    }

    pub fn categorical<S: Into<String>>(
        name: impl Into<String>,
        categories: impl IntoIterator<Item = S>,
    ) -> Self {
        Self {
            name: name.into(),
            kind: ColumnKind::Categorical,
            categories: categories.into_iter().map(Into::into).collect(),
            units: None,
        }
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == ColumnKind::Categorical
    }

    /// Index of an exact category label.
    pub fn category_index(&self, label: &str) -> Option<u32> {
        self.categories
            .iter()
            .position(|c| c == label)
            .map(|i| i as u32)
    }

    pub fn label(&self, index: u32) -> Option<&str> {
        self.categories.get(index as usize).map(String::as_str)
    }

    /// Parses a raw text field into a cell of this column's kind. Empty
    /// fields are absent.
    pub fn parse_cell(&self, row: usize, raw: &str) -> Result<Cell, TableError> {
        if raw.is_empty() {
            return Ok(Cell::Absent);
        }
        match self.kind {
            ColumnKind::Continuous => {
                let trimmed = raw.trim();
                match trimmed.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(Cell::Number(v)),
                    _ => Err(TableError::NotANumber {
                        row,
                        column: self.name.clone(),
                        value: raw.into(),
                    }),
                }
            }
            ColumnKind::Categorical => self
                .category_index(raw)
                .map(Cell::Label)
                .ok_or_else(|| TableError::UnknownCategory {
                    column: self.name.clone(),
                    value: raw.into(),
                }),
        }
    }

    /// Canonical text for a cell: shortest round-trip decimal for numbers,
    /// the label for categories, empty for absent cells.
    pub fn render(&self, cell: &Cell) -> String {
        use alloc::string::ToString;
        match cell {
            Cell::Number(v) => format_number(*v),
            Cell::Label(i) => self.label(*i).unwrap_or_default().to_string(),
            Cell::Absent => String::new(),
        }
    }
}

/// Locale-free shortest round-trip decimal, never in exponent notation.
pub fn format_number(v: f64) -> String {
    alloc::format!("{}", v)
}

/// One table cell. Categorical labels are stored as indices into the column's
/// category list.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Cell {
    Number(f64),
    Label(u32),
    Absent,
}

impl Cell {
    pub fn is_absent(&self) -> bool {
        matches!(self, Cell::Absent)
    }

    pub fn as_number(&self) -> Option<f64> {
        match self {
            Cell::Number(v) => Some(*v),
            _ => None,
        }
    }

    pub fn as_label(&self) -> Option<u32> {
        match self {
            Cell::Label(i) => Some(*i),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TableBundle {
    name: String,
    domain: Option<String>,
    description: String,
    schema: Vec<ColumnSchema>,
    target: usize,
    rows: Vec<Vec<Cell>>,
}

impl TableBundle {
    /// Validates and assembles a bundle.
    pub fn new(
        name: impl Into<String>,
        description: impl Into<String>,
        schema: Vec<ColumnSchema>,
        target: &str,
        rows: Vec<Vec<Cell>>,
    ) -> Result<Self, TableError> {
        let description = description.into();
        if description.trim().is_empty() {
            return Err(TableError::EmptyDescription);
        }
        validate_schema(&schema)?;
        let target_index = schema
            .iter()
            .position(|c| c.name == target)
            .ok_or_else(|| TableError::MissingTarget(target.into()))?;
        if !schema[target_index].is_categorical() {
            return Err(TableError::TargetNotCategorical(target.into()));
        }
        if rows.is_empty() {
            return Err(TableError::EmptyTable);
        }
        for (r, row) in rows.iter().enumerate() {
            validate_row(&schema, r, row)?;
        }
        Ok(Self {
            name: name.into(),
            domain: None,
            description,
            schema,
            target: target_index,
            rows,
        })
    }

    pub fn with_domain(mut self, domain: Option<String>) -> Self {
        self.domain = domain;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn domain(&self) -> Option<&str> {
        self.domain.as_deref()
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn schema(&self) -> &[ColumnSchema] {
        &self.schema
    }

    pub fn column(&self, index: usize) -> &ColumnSchema {
        &self.schema[index]
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|c| c.name == name)
    }

    pub fn target_index(&self) -> usize {
        self.target
    }

    pub fn target(&self) -> &ColumnSchema {
        &self.schema[self.target]
    }

    /// Row count.
    pub fn n(&self) -> usize {
        self.rows.len()
    }

    /// Column count, target included.
    pub fn p(&self) -> usize {
        self.schema.len()
    }

    pub fn rows(&self) -> &[Vec<Cell>] {
        &self.rows
    }

    pub fn cell(&self, row: usize, column: usize) -> Cell {
        self.rows[row][column]
    }

    /// Indices of every column except the target.
    pub fn feature_indices(&self) -> Vec<usize> {
        (0..self.p()).filter(|&c| c != self.target).collect()
    }

    /// Returns a copy with the given cells overwritten, re-validated.
    pub fn with_cells(
        &self,
        updates: impl IntoIterator<Item = (usize, usize, Cell)>,
    ) -> Result<Self, TableError> {
        let mut rows = self.rows.clone();
        for (r, c, cell) in updates {
            let row = rows.get_mut(r).ok_or(TableError::RowOutOfRange(r))?;
            let slot = row
                .get_mut(c)
                .ok_or_else(|| TableError::UnknownColumn(alloc::format!("#{c}")))?;
            *slot = cell;
        }
        for (r, row) in rows.iter().enumerate() {
            validate_row(&self.schema, r, row)?;
        }
        Ok(Self {
            rows,
            ..self.clone()
        })
    }

    /// SHA-256 over description, schema and every cell in a canonical encoding.
    pub fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        let mut field = |bytes: &[u8]| {
            hasher.update((bytes.len() as u64).to_le_bytes());
            hasher.update(bytes);
        };
        field(self.description.as_bytes());
        field(self.schema[self.target].name.as_bytes());
        for col in &self.schema {
            field(col.name.as_bytes());
            field(&[col.is_categorical() as u8]);
            for cat in &col.categories {
                field(cat.as_bytes());
            }
        }
        for row in &self.rows {
            for cell in row {
                match cell {
                    Cell::Number(v) => field(&v.to_bits().to_le_bytes()),
                    Cell::Label(i) => field(&(u64::from(*i) | 1 << 63).to_le_bytes()),
                    Cell::Absent => field(&[]),
                }
            }
        }
        hasher.finalize().into()
    }
}

fn validate_schema(schema: &[ColumnSchema]) -> Result<(), TableError> {
    if schema.is_empty() {
        return Err(TableError::NoColumns);
    }
    let mut names = BTreeSet::new();
    for col in schema {
        if col.name.is_empty() {
            return Err(TableError::EmptyColumnName);
        }
        if !names.insert(col.name.as_str()) {
            return Err(TableError::DuplicateColumn(col.name.clone()));
        }
        if col.is_categorical() {
            if col.categories.is_empty() {
                return Err(TableError::NoCategories(col.name.clone()));
            }
            let mut seen = BTreeSet::new();
            for cat in &col.categories {
                if !seen.insert(cat.as_str()) {
                    return Err(TableError::DuplicateCategory(col.name.clone(), cat.clone()));
                }
            }
        }
    }
    Ok(())
}

fn validate_row(schema: &[ColumnSchema], r: usize, row: &[Cell]) -> Result<(), TableError> {
    if row.len() != schema.len() {
        return Err(TableError::RowWidth {
            row: r,
            expected: schema.len(),
            found: row.len(),
        });
    }
    for (col, cell) in schema.iter().zip(row) {
        let ok = match (col.kind, cell) {
            (_, Cell::Absent) => true,
            (ColumnKind::Continuous, Cell::Number(v)) => v.is_finite(),
            (ColumnKind::Categorical, Cell::Label(i)) => (*i as usize) < col.categories.len(),
            _ => false,
        };
        if !ok {
            return Err(TableError::KindMismatch {
                row: r,
                column: col.name.clone(),
            });
        }
    }
    Ok(())
}

/// Disjoint train/test row partition, each side sorted ascending.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn is_train(&self, row: usize) -> bool {
        self.train.binary_search(&row).is_ok()
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} train / {} test", self.train.len(), self.test.len())
    }
}

/// Number of training rows for `n` rows: `round(fraction * n)`, halves toward
/// the training side.
pub fn train_size(n: usize, fraction: f64) -> usize {
    (libm::round(fraction * n as f64) as usize).min(n)
}

/// Seeded uniform (unstratified) train/test split.
pub fn split_train_test(
    bundle: &TableBundle,
    fraction: f64,
    seed: u64,
) -> Result<Split, TableError> {
    let n = bundle.n();
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(TableError::InvalidFraction(fraction));
    }
    if n < 2 {
        return Err(TableError::TooFewRows(n));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let cut = train_size(n, fraction);
    let mut train = order[..cut].to_vec();
    let mut test = order[cut..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok(Split { train, test })
}


#[cfg(test)]
mod tests {
    use super::testing::*;
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn sex_bp_schema() -> Vec<ColumnSchema> {
        vec![
            ColumnSchema::continuous("Age"),
            ColumnSchema::categorical("Sex", ["M", "F"]),
            ColumnSchema::categorical("y", ["0", "1"]),
        ]
    }

    #[test]
    fn categories_preserved() {
        let schema = sex_bp_schema();
        let rows = vec![vec![Cell::Number(37.0), Cell::Label(0), Cell::Label(1)]];
        let b = TableBundle::new("t", "desc", schema, "y", rows).unwrap();
        assert_eq!(b.p(), 3);
        assert_eq!(b.column(1).categories, vec!["M", "F"]);
    }

    #[test]
    fn unknown_category_rejected() {
        let schema = sex_bp_schema();
        let err = schema[1].parse_cell(0, "X").unwrap_err();
        assert!(matches!(err, TableError::UnknownCategory { .. }));
    }

    #[test]
    fn empty_rows_rejected() {
        let err = TableBundle::new("t", "desc", sex_bp_schema(), "y", vec![]).unwrap_err();
        assert_eq!(err, TableError::EmptyTable);
    }

    #[test]
    fn duplicate_columns_rejected() {
        let mut schema = sex_bp_schema();
        schema.push(ColumnSchema::continuous("Age"));
        let rows = vec![vec![Cell::Absent; 4]];
        let err = TableBundle::new("t", "desc", schema, "y", rows).unwrap_err();
        assert_eq!(err, TableError::DuplicateColumn("Age".into()));
    }

    #[test]
    fn target_must_be_categorical() {
        let err = TableBundle::new("t", "d", sex_bp_schema(), "Age", vec![vec![Cell::Absent; 3]])
            .unwrap_err();
        assert_eq!(err, TableError::TargetNotCategorical("Age".into()));
        let err = TableBundle::new("t", "d", sex_bp_schema(), "zz", vec![vec![Cell::Absent; 3]])
            .unwrap_err();
        assert_eq!(err, TableError::MissingTarget("zz".into()));
    }

    #[test]
    fn description_required() {
        let err = TableBundle::new("t", "  ", sex_bp_schema(), "y", vec![vec![Cell::Absent; 3]])
            .unwrap_err();
        assert_eq!(err, TableError::EmptyDescription);
    }

    #[test]
    fn kind_mismatch_rejected() {
        let rows = vec![vec![Cell::Label(0), Cell::Label(0), Cell::Label(0)]];
        let err = TableBundle::new("t", "d", sex_bp_schema(), "y", rows).unwrap_err();
        assert!(matches!(err, TableError::KindMismatch { row: 0, .. }));
    }

    #[test]
    fn ten_rows_split_eight_two() {
        let b = numeric_bundle(10);
        let s = split_train_test(&b, 0.8, 7).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (8, 2));
        assert_eq!(s, split_train_test(&b, 0.8, 7).unwrap());
    }

    #[test]
    fn single_row_cannot_split() {
        let b = numeric_bundle(1);
        assert_eq!(split_train_test(&b, 0.8, 1), Err(TableError::TooFewRows(1)));
    }

    #[test]
    fn rounding_ties_go_to_train() {
        // 0.5 * 5 = 2.5 -> 3
        assert_eq!(train_size(5, 0.5), 3);
        assert_eq!(train_size(7, 0.8), 6);
    }

    #[test]
    fn digest_tracks_cells() {
        let a = numeric_bundle(5);
        let b = a.with_cells([(0, 0, Cell::Number(99.0))]).unwrap();
        assert_ne!(a.digest(), b.digest());
        assert_eq!(a.digest(), numeric_bundle(5).digest());
    }

    #[test]
    fn shortest_round_trip_rendering() {
        assert_eq!(format_number(37.0), "37");
        assert_eq!(format_number(0.1), "0.1");
        assert_eq!(format_number(-2.5), "-2.5");
        assert_eq!(format_number(1e21), "1000000000000000000000");
    }

    proptest! {
        #[test]
        fn split_is_partition(n in 2usize..200, seed in any::<u64>(), frac in 0.05f64..0.95) {
            let b = numeric_bundle(n);
            let s = split_train_test(&b, frac, seed).unwrap();
            prop_assert_eq!(s.train.len(), train_size(n, frac));
            let mut all: Vec<usize> = s.train.iter().chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        }

        #[test]
        fn numbers_round_trip_through_text(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
            let col = ColumnSchema::continuous("x");
            let text = col.render(&Cell::Number(v));
            prop_assert_eq!(col.parse_cell(0, &text).unwrap(), Cell::Number(v));
        }
    }
}
