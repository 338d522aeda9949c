//! Classification accuracy and the adjusted Rand index.

use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

fn check_lengths(pred: usize, truth: usize) -> Result<()> {
    if pred != truth {
        return Err(Error::Bounds {
            what: "prediction length vs truth length",
            index: pred,
            len: truth,
        });
    }
    Ok(())
}

/// Fraction of positions where `pred` equals `truth`.
pub fn accuracy<T: PartialEq>(pred: &[T], truth: &[T]) -> Result<f64> {
    check_lengths(pred.len(), truth.len())?;
    if pred.is_empty() {
        return Err(Error::Argument("accuracy of an empty prediction".into()));
    }
    let hits = pred.iter().zip(truth).filter(|(p, t)| p == t).count();
    Ok(hits as f64 / pred.len() as f64)
}

fn comb2(n: usize) -> f64 {
    let n = n as f64;
    n * (n - 1.0) / 2.0
}

/// Pair-counting adjusted Rand index between two partitions.
///
/// Returns 1.0 when the index is undefined (fewer than two items, or both
/// partitions trivial in the same way).
pub fn adjusted_rand_index<A, B>(pred: &[A], truth: &[B]) -> Result<f64>
where
    A: Hash + Eq,
    B: Hash + Eq,
{
    check_lengths(pred.len(), truth.len())?;
    let n = pred.len();
    if n < 2 {
        return Ok(1.0);
    }
    let mut left: HashMap<&A, usize> = HashMap::new();
    let mut right: HashMap<&B, usize> = HashMap::new();
    let mut joint: HashMap<(&A, &B), usize> = HashMap::new();
    for (p, t) in pred.iter().zip(truth) {
        *left.entry(p).or_insert(0) += 1;
        *right.entry(t).or_insert(0) += 1;
        *joint.entry((p, t)).or_insert(0) += 1;
    }
    let index: f64 = joint.values().map(|&c| comb2(c)).sum();
    let sum_left: f64 = left.values().map(|&c| comb2(c)).sum();
    let sum_right: f64 = right.values().map(|&c| comb2(c)).sum();
    let expected = sum_left * sum_right / comb2(n);
    let max_index = 0.5 * (sum_left + sum_right);
    let denom = max_index - expected;
    if denom == 0.0 {
        return Ok(1.0);
    }
    Ok((index - expected) / denom)
}
