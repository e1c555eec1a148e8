//! Deterministic generator substreams.
//!
//! Every test (gene) draws from its own ChaCha8 stream keyed by the run seed
//! and the test id, so results do not depend on processing order or on the
//! number of worker threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    bytes.into_iter().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Stable 64-bit key for `(seed, domain, id)`.
pub fn substream_key(seed: u64, domain: &str, id: &str) -> u64 {
    let label = fnv1a(
        domain
            .bytes()
            .chain(std::iter::once(0xff))
            .chain(id.bytes()),
    );
    splitmix64(label ^ splitmix64(seed))
}

/// Generator for `(seed, domain, id)`, positioned on stream `stream`.
pub fn substream(seed: u64, domain: &str, id: &str, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(substream_key(seed, domain, id));
    rng.set_stream(stream);
    rng
}
