use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    /// Item -> fold.
    pub fold_of: Vec<usize>,
    pub folds: usize,
    pub stratified: bool,
    pub warning: Option<String>,
}

impl FoldAssignment {
    pub fn test_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] == fold).collect()
    }

    pub fn train_indices(&self, fold: usize) -> Vec<usize> {
        (0..self.fold_of.len()).filter(|&i| self.fold_of[i] != fold).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.folds];
        for &f in &self.fold_of {
            sizes[f] += 1;
        }
        sizes
    }
}

/// Shuffles within each class, concatenates the classes and returns the
/// resulting order; dealing it round-robin stratifies by class.
fn class_ordered(items: &[usize], labels: &[usize], rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &i in items {
        by_class.entry(labels[i]).or_default().push(i);
    }
    let mut order = Vec::with_capacity(items.len());
    for members in by_class.values_mut() {
        members.shuffle(rng);
        order.extend_from_slice(members);
    }
    order
}

/// Assigns `n` items to `folds` folds whose sizes differ by at most one.
/// With `labels` and `stratified`, each class is spread evenly; if some
/// class has fewer members than folds the split falls back to an
/// unstratified one and records a warning.
pub fn kfold_split(n: usize, labels: Option<&[usize]>, folds: usize, seed: u64, stratified: bool) -> Result<FoldAssignment> {
    if folds < 2 {
        return Err(Error::InvalidArgument("need at least 2 folds".into()));
    }
    if n < folds {
        return Err(Error::InvalidArgument(format!("{n} items cannot fill {folds} folds")));
    }
    if let Some(l) = labels {
        if l.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: l.len(),
                context: "labels vs items",
            });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items: Vec<usize> = (0..n).collect();
    let mut warning = None;
    let order = match labels.filter(|_| stratified) {
        Some(labels) => {
            let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
            for &l in labels {
                *counts.entry(l).or_default() += 1;
            }
            match counts.iter().find(|(_, &c)| c < folds) {
                Some((class, count)) => {
                    let msg = format!(
                        "class {class} has {count} members for {folds} folds; using an unstratified split"
                    );
                    log::warn!("{msg}");
                    warning = Some(msg);
                    let mut order = items;
                    order.shuffle(&mut rng);
                    order
                }
                None => class_ordered(&items, labels, &mut rng),
            }
        }
        None => {
            let mut order = items;
            order.shuffle(&mut rng);
            order
        }
    };
    let mut fold_of = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold_of[i] = pos % folds;
    }
    Ok(FoldAssignment {
        fold_of,
        folds,
        stratified: labels.is_some() && stratified && warning.is_none(),
        warning,
    })
}

/// Splits `items` into (train, validation) with roughly `fraction` held out,
/// stratified by label when labels are given. Both parts are non-empty when
/// there are at least two items.
pub fn validation_split(items: &[usize], labels: Option<&[usize]>, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let order = match labels {
        Some(l) => class_ordered(items, l, &mut rng),
        None => {
            let mut o = items.to_vec();
            o.shuffle(&mut rng);
            o
        }
    };
    if order.len() < 2 {
        return (order, Vec::new());
    }
    let stride = (1.0 / fraction.clamp(1e-6, 0.5)).round().max(2.0) as usize;
    let (mut train, mut val) = (Vec::new(), Vec::new());
    for (pos, i) in order.into_iter().enumerate() {
        if pos % stride == 0 {
            val.push(i);
        } else {
            train.push(i);
        }
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_items_five_folds() {
        let a = kfold_split(10, None, 5, 0, false).unwrap();
        assert_eq!(a.sizes(), vec![2; 5]);
    }

    #[test]
    fn stratified_balanced() {
        let labels: Vec<usize> = (0..100).map(|i| i % 2).collect();
        let a = kfold_split(100, Some(&labels), 5, 3, true).unwrap();
        assert!(a.stratified);
        for f in 0..5 {
            let test = a.test_indices(f);
            assert_eq!(test.iter().filter(|&&i| labels[i] == 0).count(), 10);
            assert_eq!(test.iter().filter(|&&i| labels[i] == 1).count(), 10);
        }
        assert_eq!(a, kfold_split(100, Some(&labels), 5, 3, true).unwrap());
    }

    #[test]
    fn small_class_downgrades() {
        let mut labels = vec![0; 20];
        labels[0] = 1;
        let a = kfold_split(20, Some(&labels), 5, 0, true).unwrap();
        assert!(!a.stratified);
        assert!(a.warning.is_some());
        assert_eq!(a.sizes(), vec![4; 5]);
    }

    #[test]
    fn errors() {
        assert!(kfold_split(3, None, 5, 0, false).is_err());
        assert!(kfold_split(10, None, 1, 0, false).is_err());
    }

    #[test]
    fn validation_split_is_stratified() {
        let items: Vec<usize> = (0..100).collect();
        let labels: Vec<usize> = (0..100).map(|i| i % 4).collect();
        let (train, val) = validation_split(&items, Some(&labels), 0.1, 1);
        assert_eq!(train.len() + val.len(), 100);
        assert!((9..=12).contains(&val.len()));
        for c in 0..4 {
            assert!(val.iter().any(|&i| labels[i] == c));
        }
        let (t2, v2) = validation_split(&items, Some(&labels), 0.1, 1);
        assert_eq!((train, val), (t2, v2));
    }
}
