use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Deterministic RNG for a (seed, stream) pair.
///
/// ChaCha output is stable across platforms and crate versions, which the
/// replay and WAV-hash checks depend on.
pub(crate) fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
