//! Negative samples by shuffling feature rows while the meta-path structure
//! stays fixed.

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::numkit::Matrix;
use crate::seeding;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorruptError {
    #[error("cannot corrupt an empty feature matrix")]
    Empty,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedSample {
    /// Row `i` is row `permutation[i]` of the original features.
    pub shuffled_features: Matrix,
    pub permutation: Vec<usize>,
    pub seed: u64,
}

impl CorruptedSample {
    /// Undoes the shuffle.
    pub fn restore(&self) -> Matrix {
        let mut inverse = vec![0; self.permutation.len()];
        for (i, &p) in self.permutation.iter().enumerate() {
            inverse[p] = i;
        }
        self.shuffled_features.select_rows(&inverse)
    }
}

/// Uniform random permutation of `n` indices (Fisher–Yates).
pub fn permutation(n: usize, seed: u64) -> Vec<usize> {
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seeding::rng(seed));
    perm
}

pub fn corrupt(features: &Matrix, seed: u64) -> Result<CorruptedSample, CorruptError> {
    if features.rows() == 0 {
        return Err(CorruptError::Empty);
    }
    let permutation = permutation(features.rows(), seed);
    Ok(CorruptedSample {
        shuffled_features: features.select_rows(&permutation),
        permutation,
        seed,
    })
}
