use crate::missingness::MissingnessMask;
use crate::table::{Cell, ColumnKind, Split, TableBundle};

use super::{mean_of, mode_of, train_rows, ImputeError, ImputedTable, Method, Observed};

/// Training-partition mean (continuous) or mode (categorical) of a column.
pub fn column_fill(
    bundle: &TableBundle,
    split: &Split,
    mask: &MissingnessMask,
    column: usize,
) -> Result<Cell, ImputeError> {
    let observed = Observed::new(bundle, mask)?;
    fill_for(&observed, &train_rows(split), column)
}

pub(crate) fn fill_for(
    observed: &Observed<'_>,
    train: &[usize],
    column: usize,
) -> Result<Cell, ImputeError> {
    let values = train.iter().filter_map(|&r| observed.get(r, column));
    let bundle = observed.bundle;
    let fill = match bundle.column(column).kind {
        ColumnKind::Continuous => mean_of(values.filter_map(|c| c.as_number())).map(Cell::Number),
        ColumnKind::Categorical => {
            mode_of(bundle, column, values.filter_map(|c| c.as_label())).map(Cell::Label)
        }
    };
    fill.ok_or_else(|| ImputeError::FullyMasked(bundle.column(column).name.clone()))
}

/// Fills every masked cell with its column's training mean or mode.
pub fn impute_mean_mode(
    bundle: &TableBundle,
    split: &Split,
    mask: &MissingnessMask,
) -> Result<ImputedTable, ImputeError> {
    let observed = Observed::new(bundle, mask)?;
    let train = train_rows(split);
    let mut out = ImputedTable::new(bundle.clone(), Method::MeanMode);
    for c in mask.columns(bundle) {
        let fill = fill_for(&observed, &train, c)?;
        for r in mask.rows_of(&bundle.column(c).name) {
            out.filled.insert((r, c), fill);
        }
    }
    Ok(out)
}
