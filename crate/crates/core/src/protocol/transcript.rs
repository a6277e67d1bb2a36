//! Message records, observation logs and communication accounting.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::field::FieldElement;
use crate::party::{ClientId, Party};

/// Protocol step a message belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Step {
    ShareGradients,
    DistanceShares,
    ReconstructAndSelect,
    PadShares,
    SumRetrieval,
    Reencode,
    Unpad,
    RobustAggregate,
}

impl Step {
    pub const ALL: [Step; 8] = [
        Step::ShareGradients,
        Step::DistanceShares,
        Step::ReconstructAndSelect,
        Step::PadShares,
        Step::SumRetrieval,
        Step::Reencode,
        Step::Unpad,
        Step::RobustAggregate,
    ];

    /// 1-based step number.
    pub fn number(self) -> usize {
        Step::ALL.iter().position(|&s| s == self).unwrap() + 1
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    /// Row polynomial of the dealer's bivariate sharing.
    Row,
    /// Pairwise consistency value `S(alpha_sender, alpha_receiver)`.
    CrossCheck,
    /// Broadcast list of peers whose cross-check value disagreed.
    MismatchReport,
    /// Dealer's public value for a disputed pair.
    DisputeValue,
    /// Broadcast complaint against a dealer.
    Complaint,
    /// Dealer's public row for a complaining client.
    PublishedRow,
    DistanceShare,
    Query,
    Response,
    MixtureShare,
    MixtureDistanceShare,
    Selection,
    AggregateShare,
}

/// Message payload; kept only when the run records payloads.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Body {
    pub elements: Vec<FieldElement>,
    pub ids: Vec<ClientId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub seq: u64,
    pub from: Party,
    pub to: Party,
    pub step: Step,
    /// Query or dealer index within the step, when the step repeats per
    /// client.
    pub iteration: Option<ClientId>,
    pub kind: MessageKind,
    pub element_count: usize,
    pub id_count: usize,
    pub size_bytes: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub body: Option<Body>,
}

/// Bytes charged per client id in id-carrying messages.
pub const ID_BYTES: usize = 4;

/// Append-only log of every message of a round.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transcript {
    element_bytes: usize,
    record_payloads: bool,
    messages: Vec<Message>,
}

/// Builder for one message; see [`Transcript::send`].
pub struct Envelope {
    pub from: Party,
    pub to: Party,
    pub step: Step,
    pub iteration: Option<ClientId>,
    pub kind: MessageKind,
}

impl Transcript {
    pub fn new(element_bytes: usize, record_payloads: bool) -> Self {
        Self {
            element_bytes,
            record_payloads,
            messages: Vec::new(),
        }
    }

    pub fn records_payloads(&self) -> bool {
        self.record_payloads
    }

    pub fn messages(&self) -> &[Message] {
        &self.messages
    }

    pub fn len(&self) -> usize {
        self.messages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.messages.is_empty()
    }

    /// Records a message. Payload slices are copied only when recording is
    /// enabled.
    pub fn send(&mut self, env: Envelope, elements: &[FieldElement], ids: &[ClientId]) {
        let body = self.record_payloads.then(|| Body {
            elements: elements.to_vec(),
            ids: ids.to_vec(),
        });
        self.messages.push(Message {
            seq: self.messages.len() as u64,
            from: env.from,
            to: env.to,
            step: env.step,
            iteration: env.iteration,
            kind: env.kind,
            element_count: elements.len(),
            id_count: ids.len(),
            size_bytes: elements.len() * self.element_bytes + ids.len() * ID_BYTES,
            body,
        });
    }

    /// Messages delivered to `party`, in delivery order. Clients also see
    /// broadcasts.
    pub fn observations(&self, party: Party) -> ObservationLog<'_> {
        let messages = self
            .messages
            .iter()
            .filter(|m| m.to == party || (m.to == Party::AllClients && matches!(party, Party::Client(_))))
            .collect();
        ObservationLog { party, messages }
    }

    /// Writes one JSON object per line. Payloads are included only when
    /// `with_payloads` is set and were recorded.
    pub fn write_ndjson<W: Write>(&self, mut out: W, with_payloads: bool) -> std::io::Result<()> {
        for m in &self.messages {
            let line = if with_payloads {
                serde_json::to_string(m)
            } else {
                serde_json::to_string(&Message { body: None, ..m.clone() })
            }
            .map_err(std::io::Error::other)?;
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Byte totals per party and per step.
    pub fn accounting(&self, clients: &[ClientId]) -> CommReport {
        let mut parties: BTreeMap<Party, PartyBytes> = BTreeMap::new();
        for &c in clients {
            parties.entry(Party::Client(c)).or_default();
        }
        parties.entry(Party::Federator).or_default();
        for m in &self.messages {
            parties.entry(m.from).or_default().add_sent(m.step, m.size_bytes);
            match m.to {
                Party::AllClients => {
                    for &c in clients {
                        if Party::Client(c) != m.from {
                            parties.entry(Party::Client(c)).or_default().add_received(m.step, m.size_bytes);
                        }
                    }
                }
                to => parties.entry(to).or_default().add_received(m.step, m.size_bytes),
            }
        }
        CommReport { parties }
    }
}

/// Everything one party received during a round.
#[derive(Clone, Debug)]
pub struct ObservationLog<'a> {
    pub party: Party,
    pub messages: Vec<&'a Message>,
}

impl ObservationLog<'_> {
    /// Field elements of all recorded payloads, optionally restricted to some
    /// message kinds, flattened in delivery order.
    pub fn flatten(&self, kinds: Option<&[MessageKind]>) -> Vec<FieldElement> {
        self.messages
            .iter()
            .filter(|m| kinds.is_none_or(|ks| ks.contains(&m.kind)))
            .filter_map(|m| m.body.as_ref())
            .flat_map(|b| b.elements.iter().copied())
            .collect()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PartyBytes {
    pub sent: usize,
    pub received: usize,
    pub sent_by_step: BTreeMap<Step, usize>,
    pub received_by_step: BTreeMap<Step, usize>,
}

impl PartyBytes {
    fn add_sent(&mut self, step: Step, bytes: usize) {
        self.sent += bytes;
        *self.sent_by_step.entry(step).or_default() += bytes;
    }

    fn add_received(&mut self, step: Step, bytes: usize) {
        self.received += bytes;
        *self.received_by_step.entry(step).or_default() += bytes;
    }

    pub fn total(&self) -> usize {
        self.sent + self.received
    }

    pub fn step_total(&self, step: Step) -> usize {
        self.sent_by_step.get(&step).copied().unwrap_or(0) + self.received_by_step.get(&step).copied().unwrap_or(0)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommReport {
    pub parties: BTreeMap<Party, PartyBytes>,
}

impl CommReport {
    pub fn party(&self, p: Party) -> PartyBytes {
        self.parties.get(&p).cloned().unwrap_or_default()
    }

    pub fn federator(&self) -> PartyBytes {
        self.party(Party::Federator)
    }

    /// Mean traffic over the given clients.
    pub fn mean_client_total(&self, clients: &[ClientId]) -> f64 {
        if clients.is_empty() {
            return 0.0;
        }
        let sum: usize = clients.iter().map(|&c| self.party(Party::Client(c)).total()).sum();
        sum as f64 / clients.len() as f64
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(points: &[(f64, f64)]) -> f64 {
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accounting_counts_both_ends() {
        let mut t = Transcript::new(8, false);
        let env = |from, to| Envelope {
            from,
            to,
            step: Step::DistanceShares,
            iteration: None,
            kind: MessageKind::DistanceShare,
        };
        t.send(env(Party::Client(1), Party::Federator), &[FieldElement::ZERO; 3], &[]);
        t.send(env(Party::Federator, Party::AllClients), &[], &[1, 2]);
        let report = t.accounting(&[1, 2]);
        assert_eq!(report.party(Party::Client(1)).sent, 24);
        assert_eq!(report.party(Party::Client(1)).received, 8);
        assert_eq!(report.party(Party::Client(2)).received, 8);
        assert_eq!(report.federator().received, 24);
        assert_eq!(report.federator().sent, 8);
        assert!(t.messages()[0].body.is_none());
    }

    #[test]
    fn observations_include_broadcasts() {
        let mut t = Transcript::new(1, true);
        let env = |to| Envelope {
            from: Party::Federator,
            to,
            step: Step::RobustAggregate,
            iteration: None,
            kind: MessageKind::Selection,
        };
        t.send(env(Party::AllClients), &[], &[3]);
        t.send(env(Party::Client(2)), &[FieldElement::ONE], &[]);
        assert_eq!(t.observations(Party::Client(2)).messages.len(), 2);
        assert_eq!(t.observations(Party::Client(1)).messages.len(), 1);
        assert_eq!(t.observations(Party::Federator).messages.len(), 0);
        assert_eq!(t.observations(Party::Client(2)).flatten(None), vec![FieldElement::ONE]);
    }

    #[test]
    fn slope_of_power_law() {
        let pts: Vec<_> = [2.0f64, 4.0, 8.0].iter().map(|&x| (x, 3.0 * x * x)).collect();
        assert!((loglog_slope(&pts) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ndjson_has_one_line_per_message() {
        let mut t = Transcript::new(8, true);
        for i in 1..=3 {
            t.send(
                Envelope {
                    from: Party::Client(i),
                    to: Party::Federator,
                    step: Step::DistanceShares,
                    iteration: None,
                    kind: MessageKind::DistanceShare,
                },
                &[FieldElement::ONE],
                &[],
            );
        }
        let mut buf = Vec::new();
        t.write_ndjson(&mut buf, false).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(!text.contains("body"));
        let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
        assert_eq!(first["kind"], "distance_share");
        assert_eq!(first["size_bytes"], 8);
    }
}
