use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicBool, Ordering};

use crate::gateway::{ChatBackend, GatewayError};
use crate::missingness::MissingnessMask;
use crate::prompting::{
    build_ts_prompt, parse_imputation_response, retry_prompt, serialize_row, ExpertProfile,
    ProfileOrigin,
};
use crate::table::{Cell, Split, TableBundle};

use super::mean_mode::fill_for;
use super::{train_rows, CellExchange, ImputeError, ImputedTable, Method, Observed};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LlmSettings {
    pub model: String,
    /// Appended to the persona to form the task-specification system prompt.
    pub system_suffix: String,
}

impl LlmSettings {
    pub fn new(model: impl Into<String>) -> Self {
        Self {
            model: model.into(),
            system_suffix: String::new(),
        }
    }
}

enum CellOutcome {
    Filled {
        value: Cell,
        fallback: bool,
        exchanges: Vec<CellExchange>,
    },
    Failed {
        error: GatewayError,
        exchanges: Vec<CellExchange>,
    },
    Skipped,
}

fn impute_cell<B: ChatBackend + ?Sized>(
    bundle: &TableBundle,
    mask: &MissingnessMask,
    backend: &B,
    profile: &ExpertProfile,
    settings: &LlmSettings,
    (row, column): (usize, usize),
    fallback: Cell,
) -> Result<CellOutcome, ImputeError> {
    let schema = bundle.column(column);
    let ds = serialize_row(bundle, row, &schema.name, mask)?;
    let (system, user) = build_ts_prompt(profile, &ds, &settings.system_suffix)?;
    let mut exchanges = Vec::new();
    for attempt in 0..2u8 {
        let prompt = if attempt == 0 {
            user.clone()
        } else {
            retry_prompt(&user)
        };
        let reply = match backend.complete(&settings.model, &system, &prompt) {
            Ok(exchange) => exchange,
            Err(GatewayError::EmptyResponse) => continue,
            Err(error) => return Ok(CellOutcome::Failed { error, exchanges }),
        };
        let parsed = parse_imputation_response(&reply.response, schema);
        exchanges.push(CellExchange {
            row,
            column: schema.name.clone(),
            attempt,
            exchange: reply,
        });
        if let Ok(value) = parsed {
            return Ok(CellOutcome::Filled {
                value,
                fallback: false,
                exchanges,
            });
        }
    }
    Ok(CellOutcome::Filled {
        value: fallback,
        fallback: true,
        exchanges,
    })
}

/// Imputes every masked cell through the chat backend. An unusable reply is
/// re-asked once, then replaced by the column's training mean or mode and
/// listed in `failures`. A transport-level failure stops the run; the cells
/// filled so far travel with the error.
pub fn impute_llm<B: ChatBackend + ?Sized>(
    bundle: &TableBundle,
    split: &Split,
    mask: &MissingnessMask,
    backend: &B,
    profile: &ExpertProfile,
    settings: &LlmSettings,
) -> Result<ImputedTable, ImputeError> {
    let observed = Observed::new(bundle, mask)?;
    let train = train_rows(split);
    let mut fallbacks = BTreeMap::new();
    for c in mask.columns(bundle) {
        fallbacks.insert(c, fill_for(&observed, &train, c)?);
    }
    let method = match profile.origin {
        ProfileOrigin::Expert => Method::LlmExpert,
        ProfileOrigin::NonExpertControl => Method::LlmNonExpert,
    };
    let cells = mask.coordinates(bundle);
    let aborted = AtomicBool::new(false);
    let run = |&(r, c): &(usize, usize)| -> Result<CellOutcome, ImputeError> {
        if aborted.load(Ordering::SeqCst) {
            return Ok(CellOutcome::Skipped);
        }
        let outcome = impute_cell(bundle, mask, backend, profile, settings, (r, c), fallbacks[&c])?;
        if matches!(outcome, CellOutcome::Failed { .. }) {
            aborted.store(true, Ordering::SeqCst);
        }
        Ok(outcome)
    };
    #[cfg(feature = "std")]
    let outcomes: Vec<Result<CellOutcome, ImputeError>> = {
        use rayon::prelude::*;
        cells.par_iter().map(run).collect()
    };
    #[cfg(not(feature = "std"))]
    let outcomes: Vec<Result<CellOutcome, ImputeError>> = cells.iter().map(run).collect();

    let mut out = ImputedTable::new(bundle.clone(), method);
    let mut first_failure = None;
    for (&(r, c), outcome) in cells.iter().zip(outcomes) {
        match outcome? {
            CellOutcome::Filled {
                value,
                fallback,
                exchanges,
            } => {
                out.filled.insert((r, c), value);
                if fallback {
                    out.failures.push((r, c));
                }
                out.exchanges.extend(exchanges);
            }
            CellOutcome::Failed { error, exchanges } => {
                out.exchanges.extend(exchanges);
                if first_failure.is_none() {
                    first_failure = Some((r, c, error));
                }
            }
            CellOutcome::Skipped => {}
        }
    }
    match first_failure {
        None => Ok(out),
        Some((row, c, source)) => Err(ImputeError::Gateway {
            row,
            column: bundle.column(c).name.clone(),
            source,
            partial: alloc::boxed::Box::new(out),
        }),
    }
}
