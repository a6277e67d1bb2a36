//! Keyed deterministic randomness.
//!
//! [`SharedRandomness`] is the clients' common secret seed. Every draw is
//! addressed by a [`Purpose`], so two clients asking for the same purpose get
//! bit-identical streams without coordinating counters. The federator never
//! receives a `SharedRandomness` value.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Which step of the protocol a re-randomization polynomial belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DistanceStage {
    /// Distances between the original gradients.
    Raw,
    /// Distances between nearest-neighbour mixtures.
    Mixture,
}

/// Addresses one stream of shared randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Purpose {
    /// Zero-constant polynomial masking the distance share of pair `(j, l)`.
    RerandDistance { round: u64, stage: DistanceStage, j: u32, l: u32 },
    /// One-time pad for the neighbour-sum query of client `j`.
    Pad { round: u64, j: u32 },
    /// Zero-constant mask on the sum-retrieval responses for query `j`.
    ResponseMask { round: u64, j: u32 },
    /// Zero-constant mask on the responses of the private final aggregation.
    FinalMask { round: u64 },
    /// Perturbation directions of zero-order gradient estimates.
    ZoPerturbation { round: u64 },
}

impl Purpose {
    fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(32);
        let mut push = |tag: u8, words: &[u64]| {
            out.push(tag);
            for w in words {
                out.extend_from_slice(&w.to_le_bytes());
            }
        };
        match *self {
            Purpose::RerandDistance { round, stage, j, l } => {
                let s = match stage {
                    DistanceStage::Raw => 0,
                    DistanceStage::Mixture => 1,
                };
                push(1, &[round, s, j as u64, l as u64]);
            }
            Purpose::Pad { round, j } => push(2, &[round, j as u64]),
            Purpose::ResponseMask { round, j } => push(3, &[round, j as u64]),
            Purpose::FinalMask { round } => push(4, &[round]),
            Purpose::ZoPerturbation { round } => push(5, &[round]),
        }
        out
    }
}

/// The clients' common random seed.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SharedRandomness {
    seed: [u8; 32],
}

impl SharedRandomness {
    pub fn new(seed: [u8; 32]) -> Self {
        Self { seed }
    }

    pub fn from_u64(seed: u64) -> Self {
        Self {
            seed: derive_seed(b"shared-randomness", &seed.to_le_bytes()),
        }
    }

    /// Stream for `purpose`; identical at every holder of the seed.
    pub fn stream(&self, purpose: Purpose) -> ChaCha20Rng {
        ChaCha20Rng::from_seed(derive_seed(&self.seed, &purpose.encode()))
    }
}

/// Hash-based key derivation: `sha256(key || len(info) || info)`.
pub fn derive_seed(key: &[u8], info: &[u8]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(key);
    h.update((info.len() as u64).to_le_bytes());
    h.update(info);
    h.finalize().into()
}

/// Private randomness of one party, derived from a run seed and labels.
pub fn party_rng(master: u64, label: &str, indices: &[u64]) -> ChaCha20Rng {
    let mut info = Vec::with_capacity(label.len() + 8 * indices.len());
    info.extend_from_slice(label.as_bytes());
    for i in indices {
        info.extend_from_slice(&i.to_le_bytes());
    }
    ChaCha20Rng::from_seed(derive_seed(&master.to_le_bytes(), &info))
}
