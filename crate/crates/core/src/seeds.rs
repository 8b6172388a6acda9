//! Derived seeds for independent, reproducible random streams.

/// SplitMix64 finalizer over `(seed, stream, index)`.
pub fn derive(seed: u64, stream: u64, index: u64) -> u64 {
    let mut z = seed
        ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ index.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    #[test]
    fn streams_differ() {
        let a = super::derive(1, 0, 0);
        assert_ne!(a, super::derive(1, 1, 0));
        assert_ne!(a, super::derive(1, 0, 1));
        assert_ne!(a, super::derive(2, 0, 0));
        assert_eq!(a, super::derive(1, 0, 0));
    }
}
