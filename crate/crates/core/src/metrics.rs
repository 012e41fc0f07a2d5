//! Imputation-quality and downstream metrics.

use alloc::collections::BTreeSet;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("metric needs at least one value")]
    Empty,
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("baseline score is zero")]
    ZeroBaseline,
}

fn check<T>(a: &[T], b: &[T]) -> Result<(), MetricError> {
    if a.len() != b.len() {
        return Err(MetricError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    if a.is_empty() {
        return Err(MetricError::Empty);
    }
    Ok(())
}

pub fn rmse(original: &[f64], imputed: &[f64]) -> Result<f64, MetricError> {
    check(original, imputed)?;
    let sum: f64 = original
        .iter()
        .zip(imputed)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(libm::sqrt(sum / original.len() as f64))
}

/// RMSE over the range of the original values. `None` when that range is
/// zero: such results are dropped, never reported as 0 or infinity.
pub fn nrmse(original: &[f64], imputed: &[f64]) -> Result<Option<f64>, MetricError> {
    let e = rmse(original, imputed)?;
    let lo = original.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = original.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    Ok((range > 0.0).then(|| e / range))
}

fn class_f1<T: Ord>(original: &[T], imputed: &[T], class: &T) -> f64 {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (t, p) in original.iter().zip(imputed) {
        match (t == class, p == class) {
            (true, true) => tp += 1,
            (false, true) => fp += 1,
            (true, false) => fn_ += 1,
            (false, false) => {}
        }
    }
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        0.0
    } else {
        (2 * tp) as f64 / denom as f64
    }
}

/// Binary F1 on the greater label when at most two labels occur, macro F1
/// otherwise.
pub fn f1<T: Ord>(original: &[T], imputed: &[T]) -> Result<f64, MetricError> {
    check(original, imputed)?;
    let labels: BTreeSet<&T> = original.iter().chain(imputed).collect();
    if labels.len() <= 2 {
        let positive = labels.iter().next_back().copied().ok_or(MetricError::Empty)?;
        Ok(class_f1(original, imputed, positive))
    } else {
        f1_macro(original, imputed)
    }
}

/// Unweighted mean of per-class F1 over labels occurring in either list.
pub fn f1_macro<T: Ord>(original: &[T], imputed: &[T]) -> Result<f64, MetricError> {
    check(original, imputed)?;
    let labels: BTreeSet<&T> = original.iter().chain(imputed).collect();
    let sum: f64 = labels.iter().map(|c| class_f1(original, imputed, c)).sum();
    Ok(sum / labels.len() as f64)
}

pub fn accuracy<T: PartialEq>(truth: &[T], predicted: &[T]) -> Result<f64, MetricError> {
    check(truth, predicted)?;
    let hits = truth.iter().zip(predicted).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

/// Relative change of the downstream score against the incomplete-data
/// baseline.
pub fn downstream_improvement(score_imputed: f64, score_incomplete: f64) -> Result<f64, MetricError> {
    if score_incomplete == 0.0 {
        return Err(MetricError::ZeroBaseline);
    }
    Ok((score_imputed - score_incomplete) / score_incomplete)
}
