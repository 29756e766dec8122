use crate::error::{Error, Result};
use crate::text::NormalizationPolicy;

/// Word-level Levenshtein distance with unit insert/delete/substitute costs.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Edit rate of a machine CN against its post-edited version: word edit
/// distance divided by the post-edited word count. No block shifts, so this
/// is an upper bound on shift-aware HTER.
pub fn edit_rate(machine_cn: &str, postedited_cn: &str, policy: &NormalizationPolicy) -> Result<f64> {
    let reference = policy.tokens(postedited_cn);
    if reference.is_empty() {
        return Err(Error::EmptyReference);
    }
    let hypothesis = policy.tokens(machine_cn);
    Ok(edit_distance(&hypothesis, &reference) as f64 / reference.len() as f64)
}
