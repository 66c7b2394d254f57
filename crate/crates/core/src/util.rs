//! Small shared utilities: stable hashing and derived RNG streams.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// FNV-1a over a byte slice. Stable across platforms and compiler
/// versions, unlike `std::hash`.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

/// FNV-1a over the little-endian bit patterns of a float slice.
pub fn fnv1a64_f64(values: &[f64]) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for v in values {
        for &b in &v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    }
    h
}

pub fn hex64(h: u64) -> String {
    format!("{h:016x}")
}

/// A ChaCha stream derived from a base seed and a string tag, so that
/// independent consumers (parameter init, shuffling, dropout, synthetic
/// draws) never share or shift each other's randomness.
pub fn derived_rng(seed: u64, tag: &str) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&fnv1a64(tag.as_bytes()).to_le_bytes());
    key[16..24].copy_from_slice(&seed.rotate_left(17).to_le_bytes());
    key[24..32].copy_from_slice(&fnv1a64(&[tag.as_bytes(), b"/2"].concat()).to_le_bytes());
    ChaCha8Rng::from_seed(key)
}

/// Population mean and standard deviation (divide by n).
pub fn mean_std_population(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::RngCore;

    #[test]
    fn fnv_known_value() {
        // FNV-1a of empty input is the offset basis.
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_ne!(fnv1a64(b"a"), fnv1a64(b"b"));
    }

    #[test]
    fn derived_rng_streams_are_independent_and_stable() {
        let mut a1 = derived_rng(7, "alpha");
        let mut a2 = derived_rng(7, "alpha");
        let mut b = derived_rng(7, "beta");
        let x1 = a1.next_u64();
        assert_eq!(x1, a2.next_u64());
        assert_ne!(x1, b.next_u64());
    }

    #[test]
    fn population_std() {
        let (m, s) = mean_std_population(&[2.0, 4.0]);
        assert_eq!(m, 3.0);
        assert_eq!(s, 1.0);
        let (_, s1) = mean_std_population(&[5.0]);
        assert_eq!(s1, 0.0);
    }
}
