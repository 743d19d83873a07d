//! Seeded randomness streams.
//!
//! Every random draw in the simulator comes from a [`RandomStream`] handed in
//! explicitly. Child streams are derived from a root seed and a label:
//!
//! ```text
//! key = SHA-256("rram-core/stream/v1" || seed_le64 || len_le64(label) || label || index_le64)
//! stream = ChaCha12(key)
//! ```
//!
//! Crossbars use `("device", i)` for the i-th device in row-major order,
//! `("runtime", 0)` for their cycle-to-cycle stream, and one label per
//! protocol step (`"entropy-init"`, `"csa-reference"`, ...). Populations
//! derive member seeds with [`child_seed`].

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub type RandomStream = ChaCha12Rng;

const DOMAIN: &[u8] = b"rram-core/stream/v1";

fn derive_key(seed: u64, label: &str, index: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(DOMAIN);
    h.update(seed.to_le_bytes());
    h.update((label.len() as u64).to_le_bytes());
    h.update(label.as_bytes());
    h.update(index.to_le_bytes());
    h.finalize().into()
}

/// Child stream for `(seed, label, index)`.
pub fn derive_stream(seed: u64, label: &str, index: u64) -> RandomStream {
    ChaCha12Rng::from_seed(derive_key(seed, label, index))
}

/// Child seed for population member `index` under `label`.
pub fn child_seed(seed: u64, label: &str, index: u64) -> u64 {
    let key = derive_key(seed, label, index);
    u64::from_le_bytes(key[..8].try_into().unwrap())
}

/// Snapshot of a stream position, enough to restore it bit-exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamState {
    pub key: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl StreamState {
    pub fn capture(rng: &RandomStream) -> Self {
        StreamState {
            key: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> RandomStream {
        let mut rng = ChaCha12Rng::from_seed(self.key);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}
