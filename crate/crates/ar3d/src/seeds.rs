//! Deterministic seed derivation so every randomized stage (init, shuffling,
//! dropout, synthesis) is fully reproducible from one root seed.

/// Splitmix64 finalizer; stable across platforms and releases.
fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derives an independent stream seed from a root seed and a stream label.
pub fn mix(seed: u64, stream: u64) -> u64 {
    splitmix(seed ^ splitmix(stream))
}

/// Three-way derivation for nested streams (e.g. seed, epoch, sample).
pub fn mix3(seed: u64, a: u64, b: u64) -> u64 {
    mix(mix(seed, a), b)
}
