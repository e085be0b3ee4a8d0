//! Seeded random substreams.
//!
//! Every random draw in the crate comes from a ChaCha8 generator keyed by a
//! `(seed, domain, index)` triple. The seed and domain pick the key, the
//! index picks the ChaCha stream, so item `i` of any generated collection can
//! be reproduced without generating items `0..i`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Domain tags keeping unrelated consumers of one seed apart.
pub mod domain {
    pub const FRAME: u64 = 0x4652_414d_4500_0001;
    pub const PERTURB: u64 = 0x5045_5254_5552_0002;
    pub const SCORE: u64 = 0x5343_4f52_4500_0003;
    pub const INIT: u64 = 0x494e_4954_0000_0004;
    pub const SHUFFLE: u64 = 0x5348_5546_0000_0005;
    pub const AUGMENT: u64 = 0x4155_474d_0000_0006;
    pub const EM: u64 = 0x454d_0000_0000_0007;
    pub const PLAN: u64 = 0x504c_414e_0000_0008;
}

/// SplitMix64 finalizer.
fn mix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Generator for item `index` of `domain` under `seed`.
pub fn substream(seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed ^ mix(domain)));
    rng.set_stream(index);
    rng
}
