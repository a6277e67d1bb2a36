//! Secret sharing primitives: Shamir sharings, verifiable dealing, shared
//! randomness and pads.

pub mod randomness;
pub mod shamir;
pub mod vss;

pub use randomness::{derive_seed, party_rng, DistanceStage, Purpose, SharedRandomness};
pub use shamir::{
    eval_points, pad, pad_shares, reconstruct, reconstruct_robust, rerandomizer, share_vector, vector_mask_at,
    zero_constant_poly, EvalPoint, Share, ShareKind, VectorSharing,
};
pub use vss::{run_vss, verdict, BivariateDealing, Dealer, Row, VssOutcome};
