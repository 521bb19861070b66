//! Seed derivation.
//!
//! Every random stream descends from one 64-bit base seed. A stream is named
//! by `(task, replica)`; its seed is `splitmix64(splitmix64(base ^ task') ^ replica')`
//! where `task'` and `replica'` are the indices premixed with distinct odd
//! constants. Task 0 / replica 0 is the stream a plain `run` uses, so a
//! single-cell sweep reproduces the corresponding run exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const TASK_SALT: u64 = 0x9E37_79B9_7F4A_7C15;
const REPLICA_SALT: u64 = 0xD1B5_4A32_D192_ED03;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for stream `(task, replica)` under `base`.
pub fn derive_seed(base: u64, task: u64, replica: u64) -> u64 {
    let t = splitmix64(base ^ task.wrapping_mul(TASK_SALT));
    splitmix64(t ^ replica.wrapping_mul(REPLICA_SALT))
}

pub fn stream(base: u64, task: u64, replica: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(base, task, replica))
}
