use std::fmt;

use serde::{Deserialize, Serialize};

/// 1-based client index.
pub type ClientId = usize;

/// Sender or recipient of a protocol message.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Client(ClientId),
    Federator,
    /// Reliable broadcast to every active client.
    AllClients,
}

impl fmt::Display for Party {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Party::Client(i) => write!(f, "client-{i}"),
            Party::Federator => f.write_str("federator"),
            Party::AllClients => f.write_str("all-clients"),
        }
    }
}
