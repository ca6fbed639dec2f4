//! Non-overlapping k-fold split generation.
//!
//! Every video lands in exactly one test fold and the remaining k-1 train
//! sets, with fold sizes differing by at most one. Construction is a seeded
//! shuffle of the sorted id set followed by round-robin assignment, so a
//! given (id set, k, seed) always yields the same splits regardless of input
//! order.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::rng::SeededRng;

use super::DataError;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub test_ids: Vec<String>,
    pub train_ids: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    pub seed: u64,
    pub folds: Vec<Fold>,
}

impl FoldSplit {
    pub fn k(&self) -> usize {
        self.folds.len()
    }

    pub fn all_test_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self
            .folds
            .iter()
            .flat_map(|f| f.test_ids.iter().cloned())
            .collect();
        ids.sort();
        ids
    }

    pub fn save(&self, path: &Path) -> Result<(), DataError> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| DataError::Io {
                path: parent.display().to_string(),
                source: e,
            })?;
        }
        let json = serde_json::to_string_pretty(self).expect("split serializes");
        fs::write(path, json + "\n").map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })
    }

    pub fn load(path: &Path) -> Result<Self, DataError> {
        let raw = fs::read_to_string(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        serde_json::from_str(&raw).map_err(|e| DataError::Format {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }
}

/// Builds `k` non-overlapping test folds covering `ids` exactly once each.
pub fn make_splits(ids: &[String], k: usize, seed: u64) -> Result<FoldSplit, DataError> {
    if k < 2 {
        return Err(DataError::Config(format!("k must be >= 2, got {k}")));
    }
    if ids.len() < k {
        return Err(DataError::Config(format!(
            "need at least k={k} videos, got {}",
            ids.len()
        )));
    }
    let unique: BTreeSet<&String> = ids.iter().collect();
    if unique.len() != ids.len() {
        let dup = ids
            .iter()
            .find(|id| ids.iter().filter(|o| o == id).count() > 1)
            .unwrap();
        return Err(DataError::Config(format!("duplicate video id {dup:?}")));
    }

    let mut shuffled: Vec<String> = ids.to_vec();
    shuffled.sort();
    let mut rng = SeededRng::from_u64(seed);
    rng.shuffle(&mut shuffled);

    let mut folds: Vec<Vec<String>> = vec![Vec::new(); k];
    for (i, id) in shuffled.iter().enumerate() {
        folds[i % k].push(id.clone());
    }

    let all: BTreeSet<String> = ids.iter().cloned().collect();
    let folds = folds
        .into_iter()
        .map(|mut test_ids| {
            test_ids.sort();
            let test_set: BTreeSet<&String> = test_ids.iter().collect();
            let train_ids: Vec<String> = all
                .iter()
                .filter(|id| !test_set.contains(id))
                .cloned()
                .collect();
            Fold {
                test_ids,
                train_ids,
            }
        })
        .collect();
    Ok(FoldSplit { seed, folds })
}
