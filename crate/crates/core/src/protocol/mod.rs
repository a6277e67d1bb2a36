//! The private aggregation protocol.
//!
//! A round runs eight steps:
//!
//! 1. clients deal verifiable sharings of their quantized gradients;
//! 2. clients send re-randomized shares of all pairwise squared distances;
//! 3. the federator decodes the distances and forms neighbour sets;
//! 4. for each query `j`, clients pad their shares with a common pad `m_j`;
//! 5. the federator privately retrieves `sum_{l in N_j} g_l + (n - b) m_j`;
//! 6. the federator re-shares that padded mixture;
//! 7. clients strip `(n - b) m_j`, leaving shares of the mixture `g_j^NN`;
//! 8. distances between mixtures drive Krum or Multi-Krum, and the federator
//!    decodes the sum of the selected mixtures.
//!
//! Without nearest-neighbour mixing, steps 3 to 7 are skipped and step 8 runs
//! on the raw gradient shares.

pub mod config;
pub mod oracle;
pub mod round;
pub mod transcript;

pub use config::{CorruptionPlan, DealStrategy, ProtocolConfig};
pub use oracle::{plaintext_round, OracleOutput};
pub use round::{run_round, run_round_small_field, RoundContext, RoundResult};
pub use transcript::{
    loglog_slope, Body, CommReport, Envelope, Message, MessageKind, ObservationLog, PartyBytes, Step, Transcript,
};
