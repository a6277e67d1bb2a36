//! One aggregation round: the client and federator state machines driven in
//! lockstep over the simulated message layer.

use std::collections::{BTreeMap, BTreeSet};

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::config::{CorruptionPlan, DealStrategy, ProtocolConfig};
use super::transcript::{CommReport, Envelope, MessageKind, Step, Transcript};
use crate::error::{Error, Result};
use crate::field::{FieldElement, PrimeField};
use crate::party::{ClientId, Party};
use crate::poly::Polynomial;
use crate::quant::{dequantize_sum, QuantConfig};
use crate::robust::{neighbor_sets, DistanceMatrix, NeighborSets};
use crate::rs::rs_decode_constants;
use crate::sharing::randomness::{party_rng, DistanceStage, Purpose, SharedRandomness};
use crate::sharing::shamir::{pad, rerandomizer, vector_mask_at, EvalPoint, VectorSharing};
use crate::sharing::vss::{run_vss, BivariateDealing, Dealer, Row};

/// Per-round inputs that are not part of the configuration.
#[derive(Clone, Copy, Debug)]
pub struct RoundContext<'a> {
    pub round: u64,
    /// Source of every party's private randomness.
    pub seed: u64,
    /// The clients' common seed. The federator never reads it.
    pub shared: &'a SharedRandomness,
    pub plan: &'a CorruptionPlan,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RoundResult {
    /// `sum_{i* in C*} g_{i*}^NN` (or of raw gradients without mixing).
    pub field_sum: Vec<FieldElement>,
    pub selected: Vec<ClientId>,
    /// Number of quantized gradients inside `field_sum`, `|C*| (n - b)` with
    /// mixing and `|C*|` without.
    pub normalizer: usize,
    pub active: Vec<ClientId>,
    pub excluded: Vec<ClientId>,
    /// Byzantine budget left after exclusions.
    pub b_eff: usize,
    pub restarts: usize,
    pub raw_distances: DistanceMatrix<i128>,
    pub mixture_distances: Option<DistanceMatrix<i128>>,
    pub neighbor_sets: Option<NeighborSets>,
    pub transcript: Transcript,
}

impl RoundResult {
    /// De-quantized `field_sum`.
    pub fn sum_real(&self, quant: &QuantConfig) -> Result<Vec<f64>> {
        dequantize_sum(&self.field_sum, self.normalizer as u64, quant)
    }

    /// The aggregate gradient, `sum_real / normalizer`.
    pub fn aggregate_real(&self, quant: &QuantConfig) -> Result<Vec<f64>> {
        let m = self.normalizer as f64;
        Ok(self.sum_real(quant)?.into_iter().map(|v| v / m).collect())
    }

    pub fn comm(&self) -> CommReport {
        let everyone: Vec<ClientId> = self.active.iter().chain(&self.excluded).copied().collect();
        self.transcript.accounting(&everyone)
    }
}

/// Runs a round after full configuration validation.
pub fn run_round(cfg: &ProtocolConfig, inputs: &[Vec<FieldElement>], ctx: &RoundContext<'_>) -> Result<RoundResult> {
    cfg.validate()?;
    Engine::new(cfg, ctx).run(inputs)
}

/// Runs a round checking only party counts, for statistical experiments over
/// fields too small for the quantizer bound. Decoded distances may then wrap.
pub fn run_round_small_field(
    cfg: &ProtocolConfig,
    inputs: &[Vec<FieldElement>],
    ctx: &RoundContext<'_>,
) -> Result<RoundResult> {
    cfg.validate_structure()?;
    Engine::new(cfg, ctx).run(inputs)
}

struct Client {
    id: ClientId,
    alpha: FieldElement,
    /// Verified shares of every active client's gradient.
    shares: BTreeMap<ClientId, Vec<FieldElement>>,
    /// Shares of the unpadded mixtures `g_j^NN`.
    mixtures: BTreeMap<ClientId, Vec<FieldElement>>,
    rng: ChaCha20Rng,
}

struct Engine<'a> {
    cfg: &'a ProtocolConfig,
    ctx: &'a RoundContext<'a>,
    field: PrimeField,
    transcript: Transcript,
    federator_rng: ChaCha20Rng,
}

fn env(from: Party, to: Party, step: Step, iteration: Option<ClientId>, kind: MessageKind) -> Envelope {
    Envelope {
        from,
        to,
        step,
        iteration,
        kind,
    }
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a ProtocolConfig, ctx: &'a RoundContext<'a>) -> Self {
        let field = cfg.quant.field;
        Self {
            cfg,
            ctx,
            field,
            transcript: Transcript::new(field.element_bytes(), cfg.record_payloads),
            federator_rng: party_rng(ctx.seed, "federator", &[ctx.round]),
        }
    }

    fn byz(&self, id: ClientId) -> bool {
        self.ctx.plan.is_byzantine(id)
    }

    fn run(mut self, inputs: &[Vec<FieldElement>]) -> Result<RoundResult> {
        let (n, d) = (self.cfg.n, self.cfg.d);
        if inputs.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: inputs.len() });
        }
        if let Some(bad) = inputs.iter().find(|g| g.len() != d) {
            return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
        }

        let (mut clients, excluded, restarts) = self.share_gradients(inputs)?;
        let active: Vec<ClientId> = clients.iter().map(|c| c.id).collect();
        let b_eff = self.cfg.b - excluded.len();
        let points: Vec<EvalPoint> = clients
            .iter()
            .map(|c| EvalPoint {
                client_id: c.id,
                alpha: c.alpha,
            })
            .collect();

        let raw_distances = self.distances(&clients, &points, DistanceStage::Raw, b_eff)?;

        let (mixture_distances, sets, dist_for_selection) = if self.cfg.rule.nnm {
            let sets = neighbor_sets(&raw_distances, b_eff).map_err(|e| Error::abort(Step::ReconstructAndSelect, e))?;
            for &j in &active {
                self.retrieve_mixture(&mut clients, &points, j, &sets.of(j), b_eff)?;
            }
            let mixed = self.distances(&clients, &points, DistanceStage::Mixture, b_eff)?;
            (Some(mixed.clone()), Some(sets), mixed)
        } else {
            (None, None, raw_distances.clone())
        };

        let selection = self
            .cfg
            .rule
            .selection
            .select(&dist_for_selection, b_eff)
            .map_err(|e| Error::abort(Step::RobustAggregate, e))?;
        let field_sum = self.aggregate(&clients, &points, &selection.selected, b_eff)?;
        let mix_size = if self.cfg.rule.nnm { active.len() - b_eff } else { 1 };

        Ok(RoundResult {
            field_sum,
            normalizer: selection.selected.len() * mix_size,
            selected: selection.selected,
            active,
            excluded,
            b_eff,
            restarts,
            raw_distances,
            mixture_distances,
            neighbor_sets: sets,
            transcript: self.transcript,
        })
    }

    /// Step 1: verifiable sharing of every gradient.
    fn share_gradients(&mut self, inputs: &[Vec<FieldElement>]) -> Result<(Vec<Client>, Vec<ClientId>, usize)> {
        let mut restarts = 0;
        loop {
            let (clients, excluded) = self.deal_all(inputs, restarts as u64);
            if excluded.is_empty() {
                return Ok((clients, Vec::new(), restarts));
            }
            let (&dealer, complaints) = excluded.iter().next().unwrap();
            let reason = Error::DealerExcluded {
                dealer,
                complaints: *complaints,
            };
            if self.cfg.restart_on_vss_failure {
                if restarts == 0 {
                    restarts += 1;
                    continue;
                }
                return Err(Error::abort(Step::ShareGradients, reason));
            }
            if excluded.len() > self.cfg.b {
                return Err(Error::abort(Step::ShareGradients, reason));
            }
            let ids: BTreeSet<ClientId> = excluded.keys().copied().collect();
            let clients = clients
                .into_iter()
                .filter(|c| !ids.contains(&c.id))
                .map(|mut c| {
                    c.shares.retain(|k, _| !ids.contains(k));
                    c
                })
                .collect();
            return Ok((clients, ids.into_iter().collect(), restarts));
        }
    }

    fn deal_all(&mut self, inputs: &[Vec<FieldElement>], attempt: u64) -> (Vec<Client>, BTreeMap<ClientId, usize>) {
        let (field, z, b) = (self.field, self.cfg.z, self.cfg.b);
        let round = self.ctx.round;
        let seed = self.ctx.seed;
        let points: Vec<EvalPoint> = (1..=self.cfg.n).map(|i| EvalPoint::for_client(&field, i)).collect();
        let mut clients: Vec<Client> = points
            .iter()
            .map(|p| Client {
                id: p.client_id,
                alpha: p.alpha,
                shares: BTreeMap::new(),
                mixtures: BTreeMap::new(),
                rng: party_rng(seed, "client", &[round, attempt, p.client_id as u64]),
            })
            .collect();
        let liars: BTreeSet<ClientId> = if self.ctx.plan.false_complaints {
            self.ctx.plan.byzantine.clone()
        } else {
            BTreeSet::new()
        };
        let mut excluded = BTreeMap::new();
        for (k, secret) in inputs.iter().enumerate() {
            let dealer_id = k + 1;
            let mut rng = party_rng(seed, "deal", &[round, attempt, dealer_id as u64]);
            let base = BivariateDealing::deal(&field, secret, z, &mut rng);
            let dealer = match (self.byz(dealer_id), self.ctx.plan.deal) {
                (true, DealStrategy::Inconsistent) => Dealer::inconsistent(&field, base, dealer_id, &points, &mut rng),
                (true, DealStrategy::CorruptOneRow { target }) if target != dealer_id => {
                    let bad = Row::random(&field, secret.len(), z, &mut rng);
                    Dealer::with_overrides(base, BTreeMap::from([(target, bad)]))
                }
                _ => Dealer::honest(base),
            };
            let outcome = run_vss(&field, dealer_id, &dealer, &points, b, &liars, &mut rng, &mut self.transcript);
            if outcome.accepted(b) {
                for c in clients.iter_mut() {
                    c.shares.insert(dealer_id, outcome.shares[&c.id].clone());
                }
            } else {
                excluded.insert(dealer_id, outcome.complainers.len());
            }
        }
        (clients, excluded)
    }

    /// Steps 2 and 3 (or the distance part of step 8): re-randomized distance
    /// shares, decoded by the federator.
    fn distances(
        &mut self,
        clients: &[Client],
        points: &[EvalPoint],
        stage: DistanceStage,
        b_eff: usize,
    ) -> Result<DistanceMatrix<i128>> {
        let field = self.field;
        let z = self.cfg.z;
        let ids: Vec<ClientId> = clients.iter().map(|c| c.id).collect();
        let mut pairs = Vec::new();
        for a in 0..ids.len() {
            for c in a + 1..ids.len() {
                pairs.push((ids[a], ids[c]));
            }
        }
        // Every client derives the same polynomial for a pair from the shared
        // seed; computing it once stands in for n identical derivations.
        let lambdas: Vec<Option<Polynomial>> = pairs
            .iter()
            .map(|&(j, l)| {
                self.cfg.rerandomize.then(|| {
                    let purpose = Purpose::RerandDistance {
                        round: self.ctx.round,
                        stage,
                        j: j as u32,
                        l: l as u32,
                    };
                    rerandomizer(&field, z, self.ctx.shared, purpose)
                })
            })
            .collect();
        let (send_step, decode_step, kind) = match stage {
            DistanceStage::Raw => (Step::DistanceShares, Step::ReconstructAndSelect, MessageKind::DistanceShare),
            DistanceStage::Mixture => (Step::RobustAggregate, Step::RobustAggregate, MessageKind::MixtureDistanceShare),
        };

        let mut rows = Vec::with_capacity(clients.len());
        for client in clients {
            let store = match stage {
                DistanceStage::Raw => &client.shares,
                DistanceStage::Mixture => &client.mixtures,
            };
            let mut values: Vec<FieldElement> = pairs
                .iter()
                .zip(&lambdas)
                .map(|(&(j, l), lambda)| {
                    let dist = field.squared_distance(&store[&j], &store[&l]);
                    match lambda {
                        Some(p) => field.add(dist, p.eval(&field, client.alpha)),
                        None => dist,
                    }
                })
                .collect();
            if self.byz(client.id) && self.ctx.plan.distance_shares {
                let mut rng = party_rng(self.ctx.seed, "byz-distance", &[self.ctx.round, client.id as u64, stage as u64]);
                values = field.random_vec(&mut rng, values.len());
            }
            self.transcript.send(
                env(Party::Client(client.id), Party::Federator, send_step, None, kind),
                &values,
                &[],
            );
            rows.push(values);
        }

        let xs: Vec<FieldElement> = points.iter().map(|p| p.alpha).collect();
        let decoded = rs_decode_constants(&field, &xs, &rows, 2 * z, b_eff).map_err(|e| Error::abort(decode_step, e))?;
        let mut it = decoded.into_iter();
        Ok(DistanceMatrix::from_fn(ids, |_, _| {
            field.unembed_signed(it.next().expect("one value per pair")) as i128
        }))
    }

    /// Steps 4 to 7 for the query of client `j`.
    fn retrieve_mixture(
        &mut self,
        clients: &mut [Client],
        points: &[EvalPoint],
        j: ClientId,
        neighbours: &[ClientId],
        b_eff: usize,
    ) -> Result<()> {
        let field = self.field;
        let (z, d) = (self.cfg.z, self.cfg.d);
        let round = self.ctx.round;
        let ids: Vec<ClientId> = clients.iter().map(|c| c.id).collect();

        // Step 4: pad, identical at all clients, no messages.
        let m = pad(&field, d, self.ctx.shared, Purpose::Pad { round, j: j as u32 });

        // Step 5: private sum retrieval.
        let indicator: Vec<FieldElement> = ids
            .iter()
            .map(|id| if neighbours.contains(id) { FieldElement::ONE } else { FieldElement::ZERO })
            .collect();
        let query = VectorSharing::new(&field, &indicator, z, &mut self.federator_rng);
        let mask_purpose = Purpose::ResponseMask { round, j: j as u32 };
        let mut rows = Vec::with_capacity(clients.len());
        for client in clients.iter_mut() {
            let q = query.eval(&field, client.alpha);
            self.transcript.send(
                env(Party::Federator, Party::Client(client.id), Step::SumRetrieval, Some(j), MessageKind::Query),
                &q,
                &[],
            );
            let mut response = vector_mask_at(&field, z, d, self.ctx.shared, mask_purpose, client.alpha);
            for (e, id) in q.iter().zip(&ids) {
                let padded = field.add_vec(&client.shares[id], &m);
                field.add_assign_vec(&mut response, &field.scale_vec(&padded, *e));
            }
            if self.byz(client.id) && self.ctx.plan.responses {
                response = field.random_vec(&mut client.rng, d);
            }
            self.transcript.send(
                env(Party::Client(client.id), Party::Federator, Step::SumRetrieval, Some(j), MessageKind::Response),
                &response,
                &[],
            );
            rows.push(response);
        }
        let xs: Vec<FieldElement> = points.iter().map(|p| p.alpha).collect();
        let padded_sum =
            rs_decode_constants(&field, &xs, &rows, 2 * z, b_eff).map_err(|e| Error::abort(Step::SumRetrieval, e))?;

        // Step 6: fresh degree-z sharing dealt by the federator.
        let resharing = VectorSharing::new(&field, &padded_sum, z, &mut self.federator_rng);
        // Step 7: remove (n - b) m.
        let scale = field.elem((ids.len() - b_eff) as u64);
        let offset = field.scale_vec(&m, scale);
        for client in clients.iter_mut() {
            let share = resharing.eval(&field, client.alpha);
            self.transcript.send(
                env(Party::Federator, Party::Client(client.id), Step::Reencode, Some(j), MessageKind::MixtureShare),
                &share,
                &[],
            );
            client.mixtures.insert(j, field.sub_vec(&share, &offset));
        }
        Ok(())
    }

    /// Step 8: announce or privately query the selection and decode the sum.
    fn aggregate(
        &mut self,
        clients: &[Client],
        points: &[EvalPoint],
        selected: &[ClientId],
        b_eff: usize,
    ) -> Result<Vec<FieldElement>> {
        let field = self.field;
        let (z, d) = (self.cfg.z, self.cfg.d);
        let nnm = self.cfg.rule.nnm;
        let ids: Vec<ClientId> = clients.iter().map(|c| c.id).collect();
        let xs: Vec<FieldElement> = points.iter().map(|p| p.alpha).collect();

        let mut rows = Vec::with_capacity(clients.len());
        let degree = if self.cfg.private_final_aggregation {
            let indicator: Vec<FieldElement> = ids
                .iter()
                .map(|id| if selected.contains(id) { FieldElement::ONE } else { FieldElement::ZERO })
                .collect();
            let query = VectorSharing::new(&field, &indicator, z, &mut self.federator_rng);
            let purpose = Purpose::FinalMask { round: self.ctx.round };
            for client in clients {
                let q = query.eval(&field, client.alpha);
                self.transcript.send(
                    env(Party::Federator, Party::Client(client.id), Step::RobustAggregate, None, MessageKind::Query),
                    &q,
                    &[],
                );
                let held = if nnm { &client.mixtures } else { &client.shares };
                let mut response = vector_mask_at(&field, z, d, self.ctx.shared, purpose, client.alpha);
                for (e, id) in q.iter().zip(&ids) {
                    field.add_assign_vec(&mut response, &field.scale_vec(&held[id], *e));
                }
                rows.push(self.maybe_corrupt(client, response, MessageKind::Response));
            }
            2 * z
        } else {
            self.transcript.send(
                env(Party::Federator, Party::AllClients, Step::RobustAggregate, None, MessageKind::Selection),
                &[],
                selected,
            );
            for client in clients {
                let held = if nnm { &client.mixtures } else { &client.shares };
                let mut sum = vec![FieldElement::ZERO; d];
                for id in selected {
                    field.add_assign_vec(&mut sum, &held[id]);
                }
                rows.push(self.maybe_corrupt(client, sum, MessageKind::AggregateShare));
            }
            z
        };
        rs_decode_constants(&field, &xs, &rows, degree, b_eff).map_err(|e| Error::abort(Step::RobustAggregate, e))
    }

    fn maybe_corrupt(&mut self, client: &Client, mut payload: Vec<FieldElement>, kind: MessageKind) -> Vec<FieldElement> {
        let corrupt = match kind {
            MessageKind::Response => self.ctx.plan.responses,
            _ => self.ctx.plan.aggregate_shares,
        };
        if self.byz(client.id) && corrupt {
            let mut rng = party_rng(self.ctx.seed, "byz-aggregate", &[self.ctx.round, client.id as u64]);
            payload = self.field.random_vec(&mut rng, payload.len());
        }
        self.transcript.send(
            env(Party::Client(client.id), Party::Federator, Step::RobustAggregate, None, kind),
            &payload,
            &[],
        );
        payload
    }
}
