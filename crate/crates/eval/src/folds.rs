use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::EvalError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// k-fold split of `0..n`. Stratified by class when every class has at
/// least `k` members, otherwise a plain shuffled split with
/// `stratified == false`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub k: usize,
    pub seed: u64,
    pub stratified: bool,
    pub folds: Vec<Fold>,
}

impl FoldPlan {
    pub const DEFAULT_K: usize = 3;

    pub fn new(classes: &[usize], k: usize, seed: u64) -> Result<Self, EvalError> {
        let n = classes.len();
        if k < 2 || n < k {
            return Err(EvalError::InsufficientData(format!("{n} examples cannot fill {k} folds")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_classes = classes.iter().max().map_or(0, |m| m + 1);
        let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
        for (i, &c) in classes.iter().enumerate() {
            groups[c].push(i);
        }
        groups.retain(|g| !g.is_empty());
        let stratified = groups.iter().all(|g| g.len() >= k);
        if !stratified {
            groups = vec![(0..n).collect()];
        }
        let mut tests: Vec<Vec<usize>> = vec![Vec::new(); k];
        // deal each shuffled class round-robin, continuing where the last
        // class stopped so fold sizes stay within one of each other
        let mut next = 0;
        for mut g in groups {
            g.shuffle(&mut rng);
            for i in g {
                tests[next].push(i);
                next = (next + 1) % k;
            }
        }
        let folds = tests
            .into_iter()
            .map(|mut test| {
                test.sort_unstable();
                let mut in_test = vec![false; n];
                test.iter().for_each(|&i| in_test[i] = true);
                Fold { train: (0..n).filter(|&i| !in_test[i]).collect(), test }
            })
            .collect();
        Ok(Self { k, seed, stratified, folds })
    }
}
