use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::TrainError;

const SHUFFLE_STREAM: u64 = 0x5348_5546;

/// Indices into the source and target training windows for one step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BatchPair {
    pub source: Vec<usize>,
    pub target: Vec<usize>,
}

/// The step sequence of one epoch.
///
/// Each step takes `batch/2` windows from each domain. The larger pool is
/// visited in a fresh random order (wrapping to its start to fill the last
/// step); the smaller pool is drawn with replacement so both domains yield
/// `ceil(max(N_s, N_t) / (batch/2))` batches. With equal pools both are
/// permuted. The order depends only on `(seed, epoch)`.
pub fn make_batches(
    n_source: usize,
    n_target: usize,
    batch: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<BatchPair>, TrainError> {
    if batch == 0 || batch % 2 != 0 {
        return Err(TrainError::Argument(format!("batch must be even and positive, got {batch}")));
    }
    if n_source == 0 || n_target == 0 {
        return Err(TrainError::Argument("both domains need training windows".into()));
    }
    let half = batch / 2;
    let steps = n_source.max(n_target).div_ceil(half);
    let total = steps * half;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SHUFFLE_STREAM);
    rng.set_stream(epoch);
    let permuted = |n: usize, rng: &mut ChaCha8Rng| -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        order.iter().copied().cycle().take(total).collect()
    };
    let resampled = |n: usize, rng: &mut ChaCha8Rng| -> Vec<usize> { (0..total).map(|_| rng.random_range(0..n)).collect() };

    let (src, tgt) = if n_source == n_target {
        let s = permuted(n_source, &mut rng);
        (s, permuted(n_target, &mut rng))
    } else if n_source > n_target {
        let s = permuted(n_source, &mut rng);
        (s, resampled(n_target, &mut rng))
    } else {
        let t = permuted(n_target, &mut rng);
        (resampled(n_source, &mut rng), t)
    };
    Ok((0..steps)
        .map(|i| BatchPair {
            source: src[i * half..(i + 1) * half].to_vec(),
            target: tgt[i * half..(i + 1) * half].to_vec(),
        })
        .collect())
}

/// Number of steps per epoch for the given pool sizes.
pub(crate) fn steps_per_epoch(n_source: usize, n_target: usize, batch: usize) -> usize {
    n_source.max(n_target).div_ceil((batch / 2).max(1))
}
