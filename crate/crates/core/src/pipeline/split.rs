//! Nested train/validation/test splits.
//!
//! Each of the `M` outer iterations shuffles all samples and holds out 10%
//! (rounded down) as a test set. Each of the `N` inner rounds shuffles the
//! remaining training pool and holds out 10% of it for validation.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::derived_rng;

/// Smallest dataset for which both held-out sets are non-empty.
pub const MIN_SAMPLES: usize = 20;

pub const HOLDOUT_FRACTION: f64 = 0.1;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InnerSplit {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OuterSplit {
    pub test: Vec<usize>,
    /// Training pool: every sample not in `test`.
    pub train: Vec<usize>,
    pub inner: Vec<InnerSplit>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitPlan {
    pub seed: u64,
    pub outer: Vec<OuterSplit>,
}

fn holdout(len: usize) -> usize {
    (len as f64 * HOLDOUT_FRACTION).floor() as usize
}

/// Split `pool` into `(held_out, rest)`, both sorted.
fn shuffle_split(pool: &[usize], seed: u64, path: &[u64]) -> (Vec<usize>, Vec<usize>) {
    let mut v = pool.to_vec();
    v.shuffle(&mut derived_rng(seed, path));
    let k = holdout(v.len());
    let mut held = v[..k].to_vec();
    let mut rest = v[k..].to_vec();
    held.sort_unstable();
    rest.sort_unstable();
    (held, rest)
}

/// Indices into a dataset of `num_samples` samples. A pure function of its
/// arguments.
pub fn nested_split(num_samples: usize, m: usize, n: usize, seed: u64) -> Result<SplitPlan> {
    if m == 0 {
        return Err(Error::config("outer", "need at least one outer iteration"));
    }
    if n == 0 {
        return Err(Error::config("inner", "need at least one inner round"));
    }
    if num_samples < MIN_SAMPLES {
        return Err(Error::config(
            "samples",
            format!("{num_samples} samples; need at least {MIN_SAMPLES}"),
        ));
    }
    let all: Vec<usize> = (0..num_samples).collect();
    let outer = (0..m)
        .map(|i| {
            let (test, train) = shuffle_split(&all, seed, &[0, i as u64]);
            let inner = (0..n)
                .map(|j| {
                    let (validation, train) = shuffle_split(&train, seed, &[1, i as u64, j as u64]);
                    InnerSplit { train, validation }
                })
                .collect();
            OuterSplit { test, train, inner }
        })
        .collect();
    Ok(SplitPlan { seed, outer })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn sizes_for_one_thousand() {
        let plan = nested_split(1000, 2, 3, 4).unwrap();
        for o in &plan.outer {
            assert_eq!((o.test.len(), o.train.len()), (100, 900));
            for i in &o.inner {
                assert_eq!((i.validation.len(), i.train.len()), (90, 810));
            }
        }
    }

    #[test]
    fn sets_are_disjoint_and_cover() {
        let plan = nested_split(237, 3, 2, 1).unwrap();
        for o in &plan.outer {
            let test: HashSet<_> = o.test.iter().collect();
            assert!(o.train.iter().all(|i| !test.contains(i)));
            assert_eq!(test.len() + o.train.len(), 237);
            for inner in &o.inner {
                let v: HashSet<_> = inner.validation.iter().collect();
                assert!(inner.train.iter().all(|i| !v.contains(i) && !test.contains(i)));
                assert_eq!(v.len() + inner.train.len(), o.train.len());
            }
        }
    }

    #[test]
    fn outer_iterations_differ() {
        let plan = nested_split(500, 2, 1, 9).unwrap();
        assert_ne!(plan.outer[0].test, plan.outer[1].test);
        assert_eq!(plan, nested_split(500, 2, 1, 9).unwrap());
    }

    #[test]
    fn too_small() {
        assert!(nested_split(19, 1, 1, 0).is_err());
        let plan = nested_split(MIN_SAMPLES, 1, 1, 0).unwrap();
        assert_eq!(plan.outer[0].test.len(), 2);
        assert_eq!(plan.outer[0].inner[0].validation.len(), 1);
    }
}
