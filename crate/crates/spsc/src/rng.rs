//! Seed derivation for reproducible, independently-streamed runs.
//!
//! Every run derives its RNG seeds as `mix(base_seed, cell, method, replicate)`
//! so that (a) each (cell, method, seed) triple gets an independent stream and
//! (b) the environment stream for a given (cell, replicate) is shared across
//! methods, giving paired comparisons.

/// One step of the splitmix64 generator; good avalanche, cheap, stable.
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Mixes a base seed with an arbitrary list of labels into a single 64-bit
/// seed. Deterministic and order-sensitive.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut state = base ^ 0x6a09_e667_f3bc_c908;
    let mut out = splitmix64(&mut state);
    for &p in parts {
        state ^= p.wrapping_mul(0x2545_f491_4f6c_dd1d);
        out ^= splitmix64(&mut state);
    }
    out
}

/// FNV-1a hash of a label string, for mixing method names into seeds.
pub fn label_hash(s: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derive_seed_is_deterministic_and_sensitive() {
        let a = derive_seed(17, &[1, 2, 3]);
        let b = derive_seed(17, &[1, 2, 3]);
        assert_eq!(a, b);
        assert_ne!(a, derive_seed(17, &[1, 2, 4]));
        assert_ne!(a, derive_seed(18, &[1, 2, 3]));
        assert_ne!(a, derive_seed(17, &[1, 3, 2]));
    }

    #[test]
    fn label_hash_distinguishes_methods() {
        assert_ne!(label_hash("spsc"), label_hash("linucb"));
        assert_eq!(label_hash("spsc"), label_hash("spsc"));
    }
}
