//! Deterministic few-shot splits.
//!
//! Classification: examples are bucketed by class in data order, and each
//! bucket is shuffled in class order with one [`SplitMix64`] stream seeded
//! by `seed`. The first `k` of each bucket go to train, the next `k` to dev.
//! Regression: all examples are shuffled once; the first `2k` go to train,
//! the next `2k` to dev (the interval's two poles count as two classes).

use serde::{Deserialize, Serialize};

use crate::dataset::DatasetExample;
use crate::error::{Error, Result};
use crate::registry::{TaskKind, TaskSpec};
use crate::rng::SplitMix64;

pub const DEFAULT_SEEDS: [u64; 5] = [13, 21, 42, 87, 100];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FewShotSplit {
    pub train: Vec<DatasetExample>,
    pub dev: Vec<DatasetExample>,
    pub seed: u64,
    pub k_per_class: usize,
}

pub fn sample_few_shot(
    data: &[DatasetExample],
    task: &TaskSpec,
    k_per_class: usize,
    seed: u64,
) -> Result<FewShotSplit> {
    if k_per_class == 0 {
        return Err(Error::InsufficientExamples {
            class: None,
            needed: 1,
            found: 0,
        });
    }
    let mut rng = SplitMix64::new(seed);
    let (train_idx, dev_idx) = match task.kind {
        TaskKind::Classification { classes } => {
            let mut buckets = vec![Vec::new(); classes];
            for (i, ex) in data.iter().enumerate() {
                match ex.gold.class() {
                    Some(c) if c < classes => buckets[c].push(i),
                    _ => return Err(Error::InvalidTask(format!("example `{}` has an invalid label", ex.id))),
                }
            }
            let mut train = Vec::with_capacity(classes * k_per_class);
            let mut dev = Vec::with_capacity(classes * k_per_class);
            for (class, bucket) in buckets.iter_mut().enumerate() {
                if bucket.len() < 2 * k_per_class {
                    return Err(Error::InsufficientExamples {
                        class: Some(class),
                        needed: 2 * k_per_class,
                        found: bucket.len(),
                    });
                }
                rng.shuffle(bucket);
                train.extend_from_slice(&bucket[..k_per_class]);
                dev.extend_from_slice(&bucket[k_per_class..2 * k_per_class]);
            }
            (train, dev)
        }
        TaskKind::Regression { .. } => {
            let n = 2 * k_per_class;
            if data.len() < 2 * n {
                return Err(Error::InsufficientExamples {
                    class: None,
                    needed: 2 * n,
                    found: data.len(),
                });
            }
            let mut idx: Vec<usize> = (0..data.len()).collect();
            rng.shuffle(&mut idx);
            (idx[..n].to_vec(), idx[n..2 * n].to_vec())
        }
    };
    let pick = |idx: &[usize]| idx.iter().map(|&i| data[i].clone()).collect();
    Ok(FewShotSplit {
        train: pick(&train_idx),
        dev: pick(&dev_idx),
        seed,
        k_per_class,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;
    use crate::dataset::Gold;

    fn corpus(n: usize, classes: usize) -> Vec<DatasetExample> {
        (0..n)
            .map(|i| DatasetExample {
                id: format!("ex{i}"),
                s1: format!("sentence {i}"),
                s2: None,
                gold: Gold::Class(i % classes),
            })
            .collect()
    }

    fn ids(v: &[DatasetExample]) -> HashSet<String> {
        v.iter().map(|e| e.id.clone()).collect()
    }

    #[test]
    fn binary_k16() {
        let task = TaskSpec::load("sst-2").unwrap();
        let split = sample_few_shot(&corpus(200, 2), &task, 16, 13).unwrap();
        assert_eq!(split.train.len(), 32);
        assert_eq!(split.dev.len(), 32);
        for class in 0..2 {
            let n = split.train.iter().filter(|e| e.gold == Gold::Class(class)).count();
            assert_eq!(n, 16);
        }
        assert!(ids(&split.train).is_disjoint(&ids(&split.dev)));
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let task = TaskSpec::load("sst-2").unwrap();
        let data = corpus(1000, 2);
        let a = sample_few_shot(&data, &task, 16, 42).unwrap();
        let b = sample_few_shot(&data, &task, 16, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_few_shot(&data, &task, 16, 87).unwrap();
        assert_ne!(ids(&a.train), ids(&c.train));
    }

    #[test]
    fn insufficient_class() {
        let task = TaskSpec::load("sst-2").unwrap();
        let err = sample_few_shot(&corpus(40, 2), &task, 16, 1).unwrap_err();
        assert!(matches!(err, Error::InsufficientExamples { class: Some(0), needed: 32, found: 20 }));
    }

    #[test]
    fn regression_sized_as_two_classes() {
        let task = TaskSpec::load("sts-b").unwrap();
        let data: Vec<_> = (0..64)
            .map(|i| DatasetExample {
                id: i.to_string(),
                s1: "a".into(),
                s2: Some("b".into()),
                gold: Gold::Value((i % 6) as f64 * 0.8),
            })
            .collect();
        let split = sample_few_shot(&data, &task, 16, 21).unwrap();
        assert_eq!((split.train.len(), split.dev.len()), (32, 32));
        assert!(ids(&split.train).is_disjoint(&ids(&split.dev)));
        assert!(sample_few_shot(&data[..63], &task, 16, 21).is_err());
    }

    proptest::proptest! {
        #[test]
        fn stratified_and_disjoint(seed in 0u64..10_000, k in 1usize..8, classes in 2usize..6) {
            let words: Vec<String> = (0..classes).map(|i| format!("w{i}")).collect();
            let task = TaskSpec::new("t", TaskKind::Classification { classes }, "<S1> {LABELS}", words, crate::registry::Metric::Accuracy).unwrap();
            let split = sample_few_shot(&corpus(classes * 2 * k + 7 * classes, classes), &task, k, seed).unwrap();
            for c in 0..classes {
                proptest::prop_assert_eq!(split.train.iter().filter(|e| e.gold == Gold::Class(c)).count(), k);
            }
            proptest::prop_assert_eq!(split.train.len(), split.dev.len());
            proptest::prop_assert!(ids(&split.train).is_disjoint(&ids(&split.dev)));
        }
    }
}
