use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub validation: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.70,
            validation: 0.15,
            test: 0.15,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    Train,
    Validation,
    Test,
}

/// Volume-level partition; strips inherit the subset of their volume.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: BTreeSet<String>,
    pub validation: BTreeSet<String>,
    pub test: BTreeSet<String>,
    pub seed: u64,
}

impl DatasetSplit {
    pub fn subset_of(&self, volume: &str) -> Option<Subset> {
        if self.train.contains(volume) {
            Some(Subset::Train)
        } else if self.validation.contains(volume) {
            Some(Subset::Validation)
        } else if self.test.contains(volume) {
            Some(Subset::Test)
        } else {
            None
        }
    }
}

/// Shuffle volume ids under `seed`, then take `round(n * f)` for validation
/// and test (at least one each) and give the remainder to training.
pub fn split_corpus(ids: &[String], fractions: SplitFractions, seed: u64) -> Result<DatasetSplit> {
    let unique: BTreeSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() {
        return Err(Error::Config("duplicate volume ids in corpus".into()));
    }
    if ids.len() < 3 {
        return Err(Error::Config(format!(
            "need at least 3 volumes to split, got {}",
            ids.len()
        )));
    }
    let SplitFractions {
        train,
        validation,
        test,
    } = fractions;
    if [train, validation, test].iter().any(|f| !(0.0..=1.0).contains(f))
        || (train + validation + test - 1.0).abs() > 1e-9
    {
        return Err(Error::Config(format!("split fractions {fractions:?} must sum to 1")));
    }
    let n = ids.len();
    let n_val = ((n as f64 * validation).round() as usize).max(1);
    let n_test = ((n as f64 * test).round() as usize).max(1);
    if n_val + n_test >= n {
        return Err(Error::Config(format!(
            "split of {n} volumes leaves no training data"
        )));
    }
    let mut order: Vec<&String> = ids.iter().collect();
    order.sort();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let take = |r: std::ops::Range<usize>| order[r].iter().map(|s| (*s).clone()).collect();
    Ok(DatasetSplit {
        validation: take(0..n_val),
        test: take(n_val..n_val + n_test),
        train: take(n_val + n_test..n),
        seed,
    })
}
