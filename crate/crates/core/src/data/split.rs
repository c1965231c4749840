use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{DataError, Dataset, Label};
use crate::rng::keyed_rng;

/// Partitions a dataset by label. Absent classes get no entry; row order is preserved.
pub fn split_by_labels(ds: &Dataset) -> BTreeMap<Label, Dataset> {
    let mut groups: BTreeMap<Label, Vec<usize>> = BTreeMap::new();
    for (i, &l) in ds.labels().iter().enumerate() {
        groups.entry(l).or_default().push(i);
    }
    groups
        .into_iter()
        .map(|(l, idx)| (l, ds.select_rows(&idx)))
        .collect()
}

fn test_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n - 1)
}

/// Train/test index sets, each sorted ascending.
///
/// Stratified mode takes `round(fraction * class_count)` (clamped to leave at
/// least one sample on each side) from every class present.
pub fn train_test_split_indices(
    ds: &Dataset,
    test_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(DataError::BadFraction(test_fraction));
    }
    let mut test = Vec::new();
    if stratified {
        let counts = ds.class_counts();
        for label in Label::ALL {
            let count = counts[label.code()];
            if count == 1 {
                return Err(DataError::ClassTooSmall { label, count });
            }
        }
        for label in Label::ALL {
            let mut idx: Vec<usize> = (0..ds.n_samples())
                .filter(|&i| ds.labels()[i] == label)
                .collect();
            if idx.is_empty() {
                continue;
            }
            idx.shuffle(&mut keyed_rng(seed, &[label.code() as u64]));
            test.extend_from_slice(&idx[..test_count(idx.len(), test_fraction)]);
        }
    } else {
        let n = ds.n_samples();
        if n < 2 {
            return Err(DataError::Invalid(format!(
                "cannot split {n} sample(s) into train and test"
            )));
        }
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut keyed_rng(seed, &[u64::MAX]));
        test.extend_from_slice(&idx[..test_count(n, test_fraction)]);
    }
    test.sort_unstable();
    let mut is_test = vec![false; ds.n_samples()];
    test.iter().for_each(|&i| is_test[i] = true);
    let train = (0..ds.n_samples()).filter(|&i| !is_test[i]).collect();
    Ok((train, test))
}

/// Splits into `(train, test)` datasets; rows keep their original relative order.
pub fn train_test_split(
    ds: &Dataset,
    test_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<(Dataset, Dataset), DataError> {
    let (train, test) = train_test_split_indices(ds, test_fraction, seed, stratified)?;
    Ok((ds.select_rows(&train), ds.select_rows(&test)))
}
