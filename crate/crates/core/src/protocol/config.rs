use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::party::ClientId;
use crate::quant::{validate_field_size, QuantConfig};
use crate::robust::RobustRule;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub n: usize,
    pub b: usize,
    pub z: usize,
    pub d: usize,
    pub rule: RobustRule,
    pub quant: QuantConfig,
    /// Restart sharing once after a failed verification instead of excluding
    /// the dealer; a second failure aborts.
    #[serde(default)]
    pub restart_on_vss_failure: bool,
    /// Retrieve the final aggregate through a second private sum retrieval so
    /// that clients do not learn the selected set.
    #[serde(default)]
    pub private_final_aggregation: bool,
    /// Add the shared zero-constant polynomials to distance shares. Only tests
    /// switch this off.
    #[serde(default = "yes")]
    pub rerandomize: bool,
    /// Keep message payloads in the transcript.
    #[serde(default)]
    pub record_payloads: bool,
}

fn yes() -> bool {
    true
}

impl ProtocolConfig {
    pub fn new(n: usize, b: usize, z: usize, d: usize, rule: RobustRule, quant: QuantConfig) -> Self {
        Self {
            n,
            b,
            z,
            d,
            rule,
            quant,
            restart_on_vss_failure: false,
            private_final_aggregation: false,
            rerandomize: true,
            record_payloads: false,
        }
    }

    /// Full validation, including the field-size bound for the quantizer.
    pub fn validate(&self) -> Result<()> {
        self.validate_structure()?;
        self.quant.validate()?;
        validate_field_size(&self.quant, self.n, self.b, self.d)
    }

    /// Party-count and dimension constraints only.
    pub fn validate_structure(&self) -> Result<()> {
        let (n, b, z) = (self.n, self.b, self.z);
        if z == 0 {
            return Err(Error::ConfigInvalid("privacy threshold z must be at least 1".into()));
        }
        if n <= 3 * b || n <= 2 * (z + b) {
            return Err(Error::ConfigInvalid(format!(
                "need n > max(3b, 2(z + b)), got n={n}, b={b}, z={z}"
            )));
        }
        let min = self.rule.selection.min_clients(b);
        if n < min {
            return Err(Error::ConfigInvalid(format!(
                "{:?} needs at least {min} clients for b={b}, got {n}",
                self.rule.selection
            )));
        }
        if self.d == 0 {
            return Err(Error::ConfigInvalid("model dimension must be positive".into()));
        }
        Ok(())
    }
}

/// How a Byzantine dealer deals its sharing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DealStrategy {
    #[default]
    Honest,
    /// Every other client gets a row of an unrelated polynomial.
    Inconsistent,
    /// Client `target` gets a random row; everyone else a correct one.
    CorruptOneRow { target: ClientId },
}

/// Deviations of the Byzantine clients from the message protocol. Their input
/// gradients are chosen separately.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorruptionPlan {
    pub byzantine: BTreeSet<ClientId>,
    pub deal: DealStrategy,
    pub false_complaints: bool,
    /// Random distance shares, raw and mixture stage.
    pub distance_shares: bool,
    /// Random sum-retrieval responses.
    pub responses: bool,
    /// Random shares of the final aggregate.
    pub aggregate_shares: bool,
}

impl CorruptionPlan {
    pub fn honest() -> Self {
        Self::default()
    }

    /// Every message-level deviation at once, with honest dealing.
    pub fn all_messages(byzantine: BTreeSet<ClientId>) -> Self {
        Self {
            byzantine,
            deal: DealStrategy::Honest,
            false_complaints: true,
            distance_shares: true,
            responses: true,
            aggregate_shares: true,
        }
    }

    pub fn is_byzantine(&self, id: ClientId) -> bool {
        self.byzantine.contains(&id)
    }

    /// Named strategies used by the equivalence tests.
    pub fn catalogue(byzantine: &BTreeSet<ClientId>) -> Vec<(&'static str, CorruptionPlan)> {
        let base = || CorruptionPlan {
            byzantine: byzantine.clone(),
            ..Default::default()
        };
        let first_honest = (1..).find(|i| !byzantine.contains(i)).unwrap();
        vec![
            ("none", base()),
            ("distance_shares", CorruptionPlan { distance_shares: true, ..base() }),
            ("responses", CorruptionPlan { responses: true, ..base() }),
            ("aggregate_shares", CorruptionPlan { aggregate_shares: true, ..base() }),
            ("false_complaints", CorruptionPlan { false_complaints: true, ..base() }),
            (
                "corrupt_one_row",
                CorruptionPlan {
                    deal: DealStrategy::CorruptOneRow { target: first_honest },
                    ..base()
                },
            ),
            ("inconsistent_dealing", CorruptionPlan { deal: DealStrategy::Inconsistent, ..base() }),
            ("all_messages", CorruptionPlan::all_messages(byzantine.clone())),
        ]
    }
}
