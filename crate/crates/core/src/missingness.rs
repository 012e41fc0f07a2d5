//! Missing-at-random injection on a split table.
//!
//! Up to three non-target columns are chosen for masking. Each one gets a
//! conditioning column, and within each partition the masked rows are a
//! contiguous window of the rows ranked by their conditioning value. Mask
//! membership therefore depends only on observed values and never on the
//! masked column itself.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;
use crate::table::{Cell, Split, TableBundle};

/// Maximum number of columns receiving injected missing values.
pub const MAX_MASKED_COLUMNS: usize = 3;
pub const DEFAULT_TRAIN_MISSING: usize = 40;
pub const DEFAULT_TEST_MISSING: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("MAR injection needs at least 2 columns, table has {0}")]
    TooFewColumns(usize),
    #[error("{partition} partition has {available} eligible rows for column `{column}`, {requested} requested")]
    TooManyMissing {
        partition: &'static str,
        column: String,
        requested: usize,
        available: usize,
    },
    #[error("masked cell ({row}, `{column}`) is outside the table")]
    InvalidCell { row: usize, column: String },
    #[error("conditioning column `{conditioning}` is masked in row {row} alongside `{column}`")]
    ConditioningMasked {
        row: usize,
        column: String,
        conditioning: String,
    },
    #[error("target column `{0}` must not be masked")]
    TargetMasked(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mechanism {
    #[serde(rename = "MAR")]
    Mar,
    #[serde(rename = "native")]
    Native,
}

/// Cell-level overlay marking held-out (or genuinely absent) values.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MissingnessMask {
    pub mechanism: Mechanism,
    pub cells: BTreeSet<(usize, String)>,
    #[serde(default)]
    pub conditioning: BTreeMap<String, String>,
}

impl MissingnessMask {
    /// Mask of every natively absent cell.
    pub fn native(bundle: &TableBundle) -> Self {
        let mut cells = BTreeSet::new();
        for (r, row) in bundle.rows().iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                if cell.is_absent() {
                    cells.insert((r, bundle.column(c).name.clone()));
                }
            }
        }
        Self {
            mechanism: Mechanism::Native,
            cells,
            conditioning: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn contains(&self, row: usize, column: &str) -> bool {
        // avoids allocating a probe key for every lookup
        self.cells
            .range((row, String::new())..)
            .take_while(|(r, _)| *r == row)
            .any(|(_, c)| c == column)
    }

    /// Masked rows of one column, ascending.
    pub fn rows_of(&self, column: &str) -> Vec<usize> {
        self.cells
            .iter()
            .filter(|(_, c)| c == column)
            .map(|(r, _)| *r)
            .collect()
    }

    /// Masked column indices in schema order.
    pub fn columns(&self, bundle: &TableBundle) -> Vec<usize> {
        let names: BTreeSet<&str> = self.cells.iter().map(|(_, c)| c.as_str()).collect();
        (0..bundle.p())
            .filter(|&c| names.contains(bundle.column(c).name.as_str()))
            .collect()
    }

    /// Masked cells as (row, column index), row-major then schema order.
    pub fn coordinates(&self, bundle: &TableBundle) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = self
            .cells
            .iter()
            .filter_map(|(r, c)| bundle.column_index(c).map(|ci| (*r, ci)))
            .collect();
        out.sort_unstable();
        out
    }

    /// Per-cell lookup table `[row][column]`.
    pub fn dense(&self, bundle: &TableBundle) -> Vec<Vec<bool>> {
        let mut dense = alloc::vec![alloc::vec![false; bundle.p()]; bundle.n()];
        for (r, c) in self.coordinates(bundle) {
            dense[r][c] = true;
        }
        dense
    }

    /// Checks coordinates and the MAR conditioning invariant.
    pub fn validate(&self, bundle: &TableBundle) -> Result<(), MaskError> {
        for (row, column) in &self.cells {
            if *row >= bundle.n() || bundle.column_index(column).is_none() {
                return Err(MaskError::InvalidCell {
                    row: *row,
                    column: column.clone(),
                });
            }
            if self.mechanism == Mechanism::Mar && *column == bundle.target().name {
                return Err(MaskError::TargetMasked(column.clone()));
            }
            if let Some(cond) = self.conditioning.get(column) {
                if self.contains(*row, cond) {
                    return Err(MaskError::ConditioningMasked {
                        row: *row,
                        column: column.clone(),
                        conditioning: cond.clone(),
                    });
                }
            }
        }
        Ok(())
    }
}

fn rank_key(cell: Cell) -> f64 {
    match cell {
        Cell::Number(v) => v,
        Cell::Label(i) => f64::from(i),
        Cell::Absent => f64::NAN,
    }
}

/// Rows of `partition` eligible for masking `column`, ordered by conditioning
/// value with ties broken by row index.
fn ranked_rows(
    bundle: &TableBundle,
    partition: &[usize],
    column: usize,
    conditioning: usize,
) -> Vec<usize> {
    let mut rows: Vec<usize> = partition
        .iter()
        .copied()
        .filter(|&r| {
            !bundle.cell(r, column).is_absent() && !bundle.cell(r, conditioning).is_absent()
        })
        .collect();
    rows.sort_by(|&a, &b| {
        rank_key(bundle.cell(a, conditioning))
            .total_cmp(&rank_key(bundle.cell(b, conditioning)))
            .then(a.cmp(&b))
    });
    rows
}

/// Injects MAR missingness: `min(p - 1, 3)` non-target columns, each with
/// `n_train_missing` masked training rows and `n_test_missing` masked test rows.
pub fn inject_mar(
    bundle: &TableBundle,
    split: &Split,
    n_train_missing: usize,
    n_test_missing: usize,
    seed: u64,
) -> Result<MissingnessMask, MaskError> {
    if bundle.p() < 2 {
        return Err(MaskError::TooFewColumns(bundle.p()));
    }
    let mut rng = rng::seeded(seed);
    let mut features = bundle.feature_indices();
    features.shuffle(&mut rng);
    let count = features.len().min(MAX_MASKED_COLUMNS);
    let mut selected = features[..count].to_vec();
    selected.sort_unstable();
    let mut spare: Vec<usize> = features[count..].to_vec();
    spare.sort_unstable();
    // Only the target is left to condition on when every feature is masked.
    if spare.is_empty() {
        spare.push(bundle.target_index());
    }

    let mut cells = BTreeSet::new();
    let mut conditioning = BTreeMap::new();
    for &column in &selected {
        let cond = spare[rng.random_range(0..spare.len())];
        let name = &bundle.column(column).name;
        conditioning.insert(name.clone(), bundle.column(cond).name.clone());
        for (partition, label, wanted) in [
            (&split.train, "train", n_train_missing),
            (&split.test, "test", n_test_missing),
        ] {
            let ranked = ranked_rows(bundle, partition, column, cond);
            if wanted > ranked.len() {
                return Err(MaskError::TooManyMissing {
                    partition: label,
                    column: name.clone(),
                    requested: wanted,
                    available: ranked.len(),
                });
            }
            let start = rng.random_range(0..=ranked.len() - wanted);
            for &r in &ranked[start..start + wanted] {
                cells.insert((r, name.clone()));
            }
        }
    }
    Ok(MissingnessMask {
        mechanism: Mechanism::Mar,
        cells,
        conditioning,
    })
}

/// Recomputes the percentile windows from the conditioning values and checks
/// that each partition's masked rows form one contiguous block of the ranking.
/// Returns the window start for every (column, partition) on success.
pub fn reconstruct_windows(
    bundle: &TableBundle,
    split: &Split,
    mask: &MissingnessMask,
) -> Result<Vec<(String, &'static str, usize)>, String> {
    let mut out = Vec::new();
    for (column, cond) in &mask.conditioning {
        let ci = bundle
            .column_index(column)
            .ok_or_else(|| alloc::format!("unknown column {column}"))?;
        let cc = bundle
            .column_index(cond)
            .ok_or_else(|| alloc::format!("unknown column {cond}"))?;
        let masked: BTreeSet<usize> = mask.rows_of(column).into_iter().collect();
        for (partition, label) in [(&split.train, "train"), (&split.test, "test")] {
            let ranked = ranked_rows(bundle, partition, ci, cc);
            let want: Vec<usize> = partition
                .iter()
                .copied()
                .filter(|r| masked.contains(r))
                .collect();
            if want.is_empty() {
                out.push((column.clone(), label, 0));
                continue;
            }
            let positions: Vec<usize> = ranked
                .iter()
                .enumerate()
                .filter(|(_, r)| masked.contains(r))
                .map(|(i, _)| i)
                .collect();
            let start = positions[0];
            let contiguous = positions.len() == want.len()
                && positions.iter().enumerate().all(|(k, &p)| p == start + k);
            if !contiguous {
                return Err(alloc::format!(
                    "{label} rows masked in `{column}` are not one window of `{cond}`"
                ));
            }
            out.push((column.clone(), label, start));
        }
    }
    Ok(out)
}

/// Orders two cells of the same column (absent last).
pub fn compare_cells(a: Cell, b: Cell) -> Ordering {
    rank_key(a).total_cmp(&rank_key(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::table::testing::bundle_from_columns;
    use crate::table::{split_train_test, ColumnSchema};
    use alloc::vec;

    fn wide_bundle(features: usize, n: usize) -> TableBundle {
        let mut schema: Vec<ColumnSchema> = (0..features)
            .map(|i| ColumnSchema::continuous(alloc::format!("f{i}")))
            .collect();
        schema.push(ColumnSchema::categorical("y", ["a", "b"]));
        let rows = (0..n)
            .map(|r| {
                let mut row: Vec<Cell> = (0..features)
                    .map(|c| Cell::Number(((r * 31 + c * 17) % 101) as f64))
                    .collect();
                row.push(Cell::Label((r % 2) as u32));
                row
            })
            .collect();
        bundle_from_columns(schema, rows)
    }

    #[test]
    fn wide_table_masks_three_columns() {
        let b = wide_bundle(21, 300);
        let split = split_train_test(&b, 0.8, 3).unwrap();
        let mask = inject_mar(&b, &split, 40, 10, 11).unwrap();
        let cols = mask.columns(&b);
        assert_eq!(cols.len(), 3);
        for c in cols {
            let rows = mask.rows_of(&b.column(c).name);
            let train = rows.iter().filter(|r| split.is_train(**r)).count();
            assert_eq!((train, rows.len() - train), (40, 10));
        }
        mask.validate(&b).unwrap();
        reconstruct_windows(&b, &split, &mask).unwrap();
    }

    #[test]
    fn single_feature_masks_one_column() {
        let b = wide_bundle(1, 100);
        let split = split_train_test(&b, 0.8, 3).unwrap();
        let mask = inject_mar(&b, &split, 40, 10, 1).unwrap();
        assert_eq!(mask.columns(&b), vec![0]);
        assert_eq!(mask.conditioning.get("f0").map(String::as_str), Some("y"));
    }

    #[test]
    fn index_conditioning_gives_index_window() {
        // f0 = row index, so windows over f0 are windows over row indices.
        let schema = vec![
            ColumnSchema::continuous("f0"),
            ColumnSchema::continuous("f1"),
            ColumnSchema::continuous("f2"),
            ColumnSchema::continuous("f3"),
            ColumnSchema::categorical("y", ["a"]),
        ];
        let rows: Vec<Vec<Cell>> = (0..60)
            .map(|r| {
                vec![
                    Cell::Number(r as f64),
                    Cell::Number((r * 13 % 7) as f64),
                    Cell::Number((r * 5 % 9) as f64),
                    Cell::Number((r * 3 % 4) as f64),
                    Cell::Label(0),
                ]
            })
            .collect();
        let b = bundle_from_columns(schema, rows);
        let split = split_train_test(&b, 0.5, 9).unwrap();
        for seed in 0..40 {
            let mask = inject_mar(&b, &split, 7, 3, seed).unwrap();
            for (col, cond) in &mask.conditioning {
                if cond != "f0" {
                    continue;
                }
                for partition in [&split.train, &split.test] {
                    let masked: Vec<usize> = mask
                        .rows_of(col)
                        .into_iter()
                        .filter(|r| partition.contains(r))
                        .collect();
                    // reference: every contiguous window over the sorted partition
                    let windows: Vec<Vec<usize>> = partition
                        .windows(masked.len())
                        .map(|w| w.to_vec())
                        .collect();
                    assert!(windows.contains(&masked), "seed {seed}");
                }
            }
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let b = wide_bundle(6, 120);
        let split = split_train_test(&b, 0.8, 1).unwrap();
        let a = inject_mar(&b, &split, 40, 10, 5).unwrap();
        assert_eq!(a, inject_mar(&b, &split, 40, 10, 5).unwrap());
        assert!(a.cells.iter().all(|(_, c)| c != "y"));
    }

    #[test]
    fn too_many_requested() {
        let b = wide_bundle(3, 30);
        let split = split_train_test(&b, 0.8, 1).unwrap();
        let err = inject_mar(&b, &split, 40, 10, 5).unwrap_err();
        assert!(matches!(err, MaskError::TooManyMissing { partition: "train", .. }));
    }

    #[test]
    fn one_column_is_too_few() {
        let schema = vec![ColumnSchema::categorical("y", ["a"])];
        let b = bundle_from_columns(schema, vec![vec![Cell::Label(0)]; 4]);
        let split = split_train_test(&b, 0.5, 1).unwrap();
        assert_eq!(
            inject_mar(&b, &split, 1, 1, 0),
            Err(MaskError::TooFewColumns(1))
        );
    }

    #[test]
    fn conditioning_conflict_detected() {
        let b = wide_bundle(3, 10);
        let mut mask = MissingnessMask {
            mechanism: Mechanism::Mar,
            cells: BTreeSet::new(),
            conditioning: BTreeMap::new(),
        };
        mask.cells.insert((2, "f0".into()));
        mask.cells.insert((2, "f1".into()));
        mask.conditioning.insert("f0".into(), "f1".into());
        assert!(matches!(
            mask.validate(&b),
            Err(MaskError::ConditioningMasked { row: 2, .. })
        ));
    }

    #[test]
    fn mask_json_shape() {
        let mut mask = MissingnessMask::native(&wide_bundle(2, 3));
        mask.cells.insert((1, "f0".into()));
        let json = serde_json::to_string(&mask).unwrap();
        assert_eq!(json, r#"{"mechanism":"native","cells":[[1,"f0"]],"conditioning":{}}"#);
        let back: MissingnessMask = serde_json::from_str(&json).unwrap();
        assert_eq!(back, mask);
    }
}
