//! Plaintext reference for a round: the robust rule applied directly to the
//! quantized integer gradients.

use serde::{Deserialize, Serialize};

use super::config::ProtocolConfig;
use crate::error::Result;
use crate::field::FieldElement;
use crate::party::ClientId;
use crate::robust::{pairwise_distances_with_ids, DistanceMatrix};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleOutput {
    pub sum: Vec<i64>,
    pub field_sum: Vec<FieldElement>,
    pub selected: Vec<ClientId>,
    pub normalizer: usize,
    pub raw_distances: DistanceMatrix<i128>,
}

/// `R(NNM(g))` over the clients in `active` (ascending ids), where
/// `indices[id - 1]` is the quantized gradient of client `id`.
pub fn plaintext_round(
    cfg: &ProtocolConfig,
    indices: &[Vec<i64>],
    active: &[ClientId],
    b_eff: usize,
) -> Result<OracleOutput> {
    let vectors: Vec<Vec<i64>> = active.iter().map(|&id| indices[id - 1].clone()).collect();
    let out = cfg.rule.apply_with_ids(active, &vectors, b_eff)?;
    Ok(OracleOutput {
        field_sum: cfg.quant.field.embed_vec(&out.sum)?,
        sum: out.sum,
        selected: out.selected,
        normalizer: out.normalizer,
        raw_distances: pairwise_distances_with_ids(active.to_vec(), &vectors),
    })
}
