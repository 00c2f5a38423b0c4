use std::collections::BTreeMap;

use thiserror::Error;

use super::AnnotationRecord;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AlphaError {
    #[error("need at least 2 comments with 2 or more annotations, found {0}")]
    InsufficientData(usize),
    #[error("alpha is undefined: only one category is ever used")]
    Undefined,
}

/// Krippendorff's alpha for binary nominal judgments.
///
/// Uses the coincidence-matrix form. Comments with a single annotation are
/// not pairable and are excluded. For two categories the off-diagonal
/// coincidence of a unit with `a` attack and `b` non-attack votes is
/// `a * b / (m - 1)`, which gives the closed form used here.
pub fn krippendorff_alpha(records: &[AnnotationRecord]) -> Result<f64, AlphaError> {
    let mut units: BTreeMap<&str, (u64, u64)> = BTreeMap::new();
    for r in records {
        let u = units.entry(r.comment_id.as_str()).or_default();
        if r.is_attack {
            u.1 += 1;
        } else {
            u.0 += 1;
        }
    }
    let mut paired = 0usize;
    let (mut n0, mut n1) = (0u64, 0u64);
    let mut disagreement = 0.0f64;
    for &(no, yes) in units.values() {
        let m = no + yes;
        if m < 2 {
            continue;
        }
        paired += 1;
        n0 += no;
        n1 += yes;
        disagreement += (no * yes) as f64 / (m - 1) as f64;
    }
    if paired < 2 {
        return Err(AlphaError::InsufficientData(paired));
    }
    if n0 == 0 || n1 == 0 {
        return Err(AlphaError::Undefined);
    }
    let n = (n0 + n1) as f64;
    Ok(1.0 - (n - 1.0) * disagreement / (n0 as f64 * n1 as f64))
}
