use alloc::vec::Vec;

use crate::missingness::MissingnessMask;
use crate::table::{Cell, ColumnKind, Split, TableBundle};

use super::{mean_of, mode_of, train_rows, ImputeError, ImputedTable, Method, Observed};

pub const DEFAULT_K: usize = 5;

/// Per-column min-max ranges over observed training values.
fn training_ranges(observed: &Observed<'_>, train: &[usize]) -> Vec<Option<(f64, f64)>> {
    let bundle = observed.bundle;
    (0..bundle.p())
        .map(|c| {
            if bundle.column(c).kind != ColumnKind::Continuous {
                return None;
            }
            let mut range: Option<(f64, f64)> = None;
            for v in train.iter().filter_map(|&r| observed.get(r, c)?.as_number()) {
                range = Some(match range {
                    None => (v, v),
                    Some((lo, hi)) => (lo.min(v), hi.max(v)),
                });
            }
            range
        })
        .collect()
}

/// Scaled distance over the features observed in both rows, divided by their
/// count before the square root. `None` when no feature is shared.
pub(crate) fn distance(
    observed: &Observed<'_>,
    ranges: &[Option<(f64, f64)>],
    features: &[usize],
    a: usize,
    b: usize,
) -> Option<f64> {
    let mut sum = 0.0;
    let mut common = 0usize;
    for &c in features {
        let (Some(x), Some(y)) = (observed.get(a, c), observed.get(b, c)) else {
            continue;
        };
        common += 1;
        sum += match (x, y) {
            (Cell::Number(x), Cell::Number(y)) => match ranges[c] {
                Some((lo, hi)) if hi > lo => {
                    let d = (x - y) / (hi - lo);
                    d * d
                }
                _ => 0.0,
            },
            (Cell::Label(x), Cell::Label(y)) => (x != y) as u8 as f64,
            _ => 0.0,
        };
    }
    (common > 0).then(|| libm::sqrt(sum / common as f64))
}

/// Mean or mode of the `k` nearest training rows that have the column
/// observed. Distance ties go to the lower row index.
pub fn impute_knn(
    bundle: &TableBundle,
    split: &Split,
    mask: &MissingnessMask,
    k: usize,
) -> Result<ImputedTable, ImputeError> {
    if k == 0 {
        return Err(ImputeError::InvalidK);
    }
    let observed = Observed::new(bundle, mask)?;
    let train = train_rows(split);
    let ranges = training_ranges(&observed, &train);
    let target = bundle.target_index();
    let mut out = ImputedTable::new(bundle.clone(), Method::Knn);
    for c in mask.columns(bundle) {
        let name = &bundle.column(c).name;
        let features: Vec<usize> = (0..bundle.p()).filter(|&j| j != c && j != target).collect();
        let donors: Vec<usize> = train
            .iter()
            .copied()
            .filter(|&t| observed.get(t, c).is_some())
            .collect();
        if donors.is_empty() {
            return Err(ImputeError::FullyMasked(name.clone()));
        }
        for r in mask.rows_of(name) {
            let mut ranked: Vec<(f64, usize)> = donors
                .iter()
                .filter(|&&t| t != r)
                .filter_map(|&t| distance(&observed, &ranges, &features, r, t).map(|d| (d, t)))
                .collect();
            if ranked.is_empty() {
                return Err(ImputeError::NoCandidates {
                    row: r,
                    column: name.clone(),
                });
            }
            ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut chosen: Vec<usize> = ranked.iter().take(k).map(|&(_, t)| t).collect();
            chosen.sort_unstable();
            let values = chosen.iter().filter_map(|&t| observed.get(t, c));
            let fill = match bundle.column(c).kind {
                ColumnKind::Continuous => {
                    mean_of(values.filter_map(|v| v.as_number())).map(Cell::Number)
                }
                ColumnKind::Categorical => {
                    mode_of(bundle, c, values.filter_map(|v| v.as_label())).map(Cell::Label)
                }
            };
            out.filled.insert((r, c), fill.expect("neighbours have the column observed"));
        }
    }
    Ok(out)
}
