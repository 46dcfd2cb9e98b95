use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numcore::{Scalar, Tensor};
use crate::seeds;

pub const TEXT_BUCKETS: usize = 4096;
/// Seed of the frozen token table; recorded in checkpoint metadata.
pub const DEFAULT_TEXT_SEED: u64 = 0x7e47_7ab1e;

/// Hashed bag-of-words sentence encoder with a frozen Gaussian token table.
#[derive(Clone, Debug)]
pub struct TextEncoder<S> {
    table: Tensor<S>,
    dim: usize,
    seed: u64,
}

impl<S: Scalar> TextEncoder<S> {
    pub fn new(dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            table: Tensor::randn([TEXT_BUCKETS, dim], 1.0, &mut rng),
            dim,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn bucket(token: &str) -> usize {
        (seeds::fnv1a(token.as_bytes()) % TEXT_BUCKETS as u64) as usize
    }

    /// Lowercases, splits on whitespace, mean-pools token rows and
    /// L2-normalizes.
    pub fn embed(&self, instruction: &str) -> Result<Vec<S>> {
        let lower = instruction.to_lowercase();
        let tokens: Vec<&str> = lower.split_whitespace().collect();
        if tokens.is_empty() {
            return Err(Error::Invalid("instruction must contain a token".into()));
        }
        let mut acc = vec![S::zero(); self.dim];
        for tok in &tokens {
            let b = Self::bucket(tok);
            let row = &self.table.data()[b * self.dim..(b + 1) * self.dim];
            acc.iter_mut().zip(row).for_each(|(a, &r)| *a = *a + r);
        }
        let n = S::from_usize(tokens.len()).unwrap();
        acc.iter_mut().for_each(|a| *a = *a / n);
        let norm = acc.iter().map(|&v| v * v).sum::<S>().sqrt();
        if norm == S::zero() {
            return Err(Error::Invalid("instruction embeds to the zero vector".into()));
        }
        acc.iter_mut().for_each(|a| *a = *a / norm);
        Ok(acc)
    }
}
