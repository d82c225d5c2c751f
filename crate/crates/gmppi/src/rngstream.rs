//! Counter-based random streams: every (iteration, rollout) pair owns an
//! independent ChaCha stream derived from one master seed, so draws are
//! identical no matter how work is scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream id layout: iteration index in the high bits, rollout index in
/// the low 16. Rollout counts stay far below 2^16 and iteration counts
/// far below 2^48 in any realistic run.
pub fn rollout_rng(master_seed: u64, iteration: u64, rollout: u64) -> ChaCha8Rng {
    debug_assert!(rollout < (1 << 16));
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((iteration << 16) | rollout);
    rng
}
