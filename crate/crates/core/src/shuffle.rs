//! Per-question random relabeling of candidate labels and its inverse.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Purpose};
use crate::types::{Label, PredictionMatrix};

/// One permutation of `[0, K)` per question. `perms[q][original]` is the
/// label that `original` becomes on question `q`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffleMap {
    perms: Vec<Vec<Label>>,
    seed: u64,
}

impl ShuffleMap {
    /// Draw `m` independent uniform permutations of `k` labels.
    pub fn random(m: usize, k: usize, seed: u64) -> Self {
        let perms = (0..m)
            .map(|q| {
                let mut p: Vec<Label> = (0..k).collect();
                p.shuffle(&mut stream(seed, Purpose::Shuffle, q as u64));
                p
            })
            .collect();
        Self { perms, seed }
    }

    pub fn identity(m: usize, k: usize) -> Self {
        Self {
            perms: vec![(0..k).collect(); m],
            seed: 0,
        }
    }

    /// Build from explicit permutations, validating each is a bijection.
    pub fn from_perms(perms: Vec<Vec<Label>>, seed: u64) -> Result<Self> {
        for (q, p) in perms.iter().enumerate() {
            let mut seen = vec![false; p.len()];
            for &l in p {
                if l >= p.len() || std::mem::replace(&mut seen[l], true) {
                    return Err(Error::Input(format!("entry {q} is not a permutation")));
                }
            }
        }
        Ok(Self { perms, seed })
    }

    pub fn len(&self) -> usize {
        self.perms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.perms.is_empty()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn perm(&self, question: usize) -> &[Label] {
        &self.perms[question]
    }

    pub fn inverse(&self) -> Self {
        let perms = self
            .perms
            .iter()
            .map(|p| {
                let mut inv = vec![0; p.len()];
                for (orig, &shuffled) in p.iter().enumerate() {
                    inv[shuffled] = orig;
                }
                inv
            })
            .collect();
        Self {
            perms,
            seed: self.seed,
        }
    }

    fn check(&self, pm: &PredictionMatrix) -> Result<()> {
        if self.perms.len() != pm.m() {
            return Err(Error::dim("shuffle map length", pm.m(), self.perms.len()));
        }
        if let Some(p) = self.perms.iter().find(|p| p.len() != pm.k()) {
            return Err(Error::dim("permutation size", pm.k(), p.len()));
        }
        Ok(())
    }

    /// Relabel every answer (and the truth) of question `q` through `perms[q]`.
    pub fn apply(&self, pm: &PredictionMatrix) -> Result<PredictionMatrix> {
        self.check(pm)?;
        let n = pm.n();
        let answers = pm
            .answers_flat()
            .iter()
            .enumerate()
            .map(|(idx, &a)| self.perms[idx / n][a])
            .collect();
        let truth = pm.truth().map(|t| {
            t.iter()
                .enumerate()
                .map(|(q, &a)| self.perms[q][a])
                .collect()
        });
        Ok(pm.replace_labels(answers, truth))
    }
}

/// Shuffle every question's labels with an independent uniform permutation.
pub fn shuffle_apply(pm: &PredictionMatrix, seed: u64) -> (PredictionMatrix, ShuffleMap) {
    let map = ShuffleMap::random(pm.m(), pm.k(), seed);
    let out = map.apply(pm).expect("map drawn for this matrix");
    (out, map)
}

/// Undo [`shuffle_apply`].
pub fn shuffle_invert(pm: &PredictionMatrix, map: &ShuffleMap) -> Result<PredictionMatrix> {
    map.inverse().apply(pm)
}

/// Map one aggregated label per question back to the original labeling.
pub fn invert_labels(labels: &[Label], map: &ShuffleMap) -> Result<Vec<Label>> {
    if labels.len() != map.len() {
        return Err(Error::dim("label vector length", map.len(), labels.len()));
    }
    labels
        .iter()
        .enumerate()
        .map(|(q, &l)| {
            map.perms[q].iter().position(|&s| s == l).ok_or_else(|| {
                Error::Domain(format!("label {l} outside permutation on question {q}"))
            })
        })
        .collect()
}
