/// SplitMix64 finaliser.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable seed for one generation stream, independent of iteration order.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts.iter().fold(0x5EED_0F_A11_C0DE, |h, &p| mix64(h ^ mix64(p)))
}

/// Stream tags so content, degradation and noise never share seeds.
pub mod stream {
    pub const PROFILE: u64 = 1;
    pub const CONTENT: u64 = 2;
    pub const DEGRADE: u64 = 3;
}
