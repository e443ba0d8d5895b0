//! Seeded random streams.
//!
//! Every simulated run owns one [`RngStream`]. Streams for parallel runs are
//! derived from a master seed and the run index, so the outcome of run `i`
//! does not depend on how many workers execute the experiment or in what
//! order runs complete.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream: u64,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64) -> Self {
        Self::for_run(seed, 0)
    }

    /// Independent stream for run `run_index` under `master_seed`.
    pub fn for_run(master_seed: u64, run_index: u64) -> Self {
        let mut inner = ChaCha8Rng::seed_from_u64(master_seed);
        inner.set_stream(run_index);
        Self {
            seed: master_seed,
            stream: run_index,
            inner,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self) -> u64 {
        self.stream
    }

    /// Uniform draw on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        self.inner.random::<f64>()
    }

    /// Uniform integer on `0..n`. `n` must be positive.
    #[inline]
    pub fn index(&mut self, n: usize) -> usize {
        debug_assert!(n > 0);
        // Floor of a scaled uniform keeps one draw per call.
        ((self.uniform() * n as f64) as usize).min(n - 1)
    }
}
