use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use super::SolverError;

/// Draws block indices with probabilities `p`.
#[derive(Debug, Clone)]
pub struct BlockSampler {
    dist: WeightedIndex<f64>,
}

impl BlockSampler {
    pub fn new(p: &[f64]) -> Result<Self, SolverError> {
        WeightedIndex::new(p)
            .map(|dist| Self { dist })
            .map_err(|e| SolverError::InvalidConfig(format!("sampling distribution: {e}")))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.dist.sample(rng)
    }
}

/// One draw from `p`. Entries may be zero; at least one must be positive.
pub fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> Result<usize, SolverError> {
    Ok(BlockSampler::new(p)?.sample(rng))
}
