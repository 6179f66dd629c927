//! Deterministic seeding. Every random object in the crate is a pure
//! function of a 64-bit seed; derived seeds are produced by mixing, never
//! by drawing from a shared generator, so results do not depend on the
//! order in which jobs run.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Mixes a base seed with an arbitrary list of indices.
pub fn derive(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(splitmix64(base), |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Seed for one Monte-Carlo trial of one grid cell.
pub fn trial_seed(base: u64, cell: usize, trial: usize) -> u64 {
    derive(base, &[cell as u64, trial as u64])
}

/// Seed for a named sub-stream (e.g. "signal", "noise") of a parent seed.
pub fn stream(parent: u64, tag: u64) -> u64 {
    derive(parent, &[0x5eed_0000_0000_0000 | tag])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derived_seeds_differ_across_cells_and_trials() {
        let a = trial_seed(1, 0, 0);
        let b = trial_seed(1, 0, 1);
        let c = trial_seed(1, 1, 0);
        assert!(a != b && a != c && b != c);
        assert_eq!(a, trial_seed(1, 0, 0));
    }
}
