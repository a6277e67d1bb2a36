//! The federated training loop.
//!
//! Every epoch each client computes a full-batch (or mini-batch) gradient on
//! its Dirichlet shard, quantizes it, and the clients run one aggregation
//! round. The model moves by `-lr` times the normalized aggregate.

use std::collections::BTreeSet;
use std::time::Instant;

use byzagg_core::attacks::{self, AttackKind};
use byzagg_core::field::FieldElement;
use byzagg_core::party::ClientId;
use byzagg_core::protocol::{plaintext_round, run_round, ProtocolConfig, RoundContext};
use byzagg_core::quant::{dequantize_sum, quantize};
use byzagg_core::sharing::randomness::{party_rng, SharedRandomness};
use byzagg_core::zo::{compression_ratio, sample_perturbations, zo_estimate};
use rand::seq::IndexedRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{Backend, DataSpec, ExperimentConfig, Optimizer, RuleVariant};
use crate::data::{load_csv, load_idx, synthetic_blobs, Dataset};
use crate::error::Result;
use crate::model::LogReg;
use crate::partition::dirichlet_partition;

/// One CSV row per seed and epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub seed: u64,
    pub epoch: usize,
    pub test_acc: f64,
    pub train_loss: f64,
    /// Mean bytes sent plus received per client in this round.
    pub bytes_user: f64,
    pub bytes_fed: u64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Fill `wall_ms`. Off by default so repeated runs write identical files.
    pub timing: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub rule: RuleVariant,
    pub seed: u64,
    pub rows: Vec<MetricsRow>,
    /// Set when a round aborted; `rows` then stops at the last good epoch.
    pub failure: Option<String>,
}

impl RunResult {
    pub fn max_accuracy(&self) -> f64 {
        self.rows.iter().map(|r| r.test_acc).fold(0.0, f64::max)
    }

    pub fn final_accuracy(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.test_acc)
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub config: ExperimentConfig,
    /// Ordered by rule (as listed in the config), then seed.
    pub runs: Vec<RunResult>,
    pub dim: usize,
}

impl ExperimentOutput {
    pub fn runs_for(&self, rule: RuleVariant) -> impl Iterator<Item = &RunResult> {
        self.runs.iter().filter(move |r| r.rule == rule)
    }

    /// Scalars uploaded per client relative to a full gradient.
    pub fn compression_ratio(&self) -> f64 {
        match self.config.optimizer {
            Optimizer::Sgd => 1.0,
            Optimizer::Zo => compression_ratio(self.dim, self.config.zo.r),
        }
    }
}

/// Train and test splits for a data spec.
pub fn load_data(spec: &DataSpec) -> Result<(Dataset, Dataset)> {
    match spec {
        DataSpec::Synthetic(blobs) => synthetic_blobs(blobs, &mut party_rng(blobs.seed, "blobs", &[])),
        DataSpec::Idx {
            train_images,
            train_labels,
            test_images,
            test_labels,
            classes,
        } => Ok((
            load_idx(train_images, train_labels, *classes)?,
            load_idx(test_images, test_labels, *classes)?,
        )),
        DataSpec::Csv { train, test, classes } => Ok((load_csv(train, *classes)?, load_csv(test, *classes)?)),
    }
}

/// Runs every (rule, seed) pair of `cfg`, in parallel on the current rayon
/// pool.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let (train, test) = load_data(&cfg.data)?;
    let model = LogReg::for_dataset(&train);
    for &rule in &cfg.rules {
        cfg.protocol_config(rule, model.dim())?.validate()?;
    }
    let jobs: Vec<(RuleVariant, u64)> = cfg
        .rules
        .iter()
        .flat_map(|&r| cfg.seeds.iter().map(move |&s| (r, s)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(rule, seed)| run_single(cfg, &train, &test, rule, seed, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentOutput {
        config: cfg.clone(),
        runs,
        dim: model.dim(),
    })
}

/// One training run. Protocol aborts end the run and are reported in
/// [`RunResult::failure`]; configuration errors are returned.
pub fn run_single(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
    rule: RuleVariant,
    seed: u64,
    opts: &RunOptions,
) -> Result<RunResult> {
    let model = LogReg::for_dataset(train);
    let d = model.dim();
    let pcfg = cfg.protocol_config(rule, d)?;
    pcfg.validate()?;
    let (n, b) = (pcfg.n, pcfg.b);

    let parts = dirichlet_partition(&train.labels, train.classes, n, cfg.dirichlet_beta, &mut party_rng(seed, "partition", &[]))?;
    let byzantine: BTreeSet<ClientId> = if cfg.attack.kind == AttackKind::None {
        BTreeSet::new()
    } else {
        attacks::byzantine_ids(n, b)
    };
    let plan = cfg.attack.corruption_plan(byzantine.clone());
    let flipped = if cfg.attack.kind == AttackKind::LabelFlip {
        Some(attacks::label_flip(&train.labels, train.classes)?)
    } else {
        None
    };
    let shared = SharedRandomness::from_u64(seed);
    let all_ids: Vec<ClientId> = (1..=n).collect();
    let everyone: Vec<usize> = (0..train.len()).collect();

    let mut w = vec![0.0; d];
    let mut rows = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        let start = Instant::now();
        let perturbations = match cfg.optimizer {
            Optimizer::Zo => Some(sample_perturbations(d, cfg.zo.r, &shared, epoch as u64)),
            Optimizer::Sgd => None,
        };

        let mut gradients = Vec::with_capacity(n);
        for id in 1..=n {
            let batch = match cfg.batch_size {
                Some(k) if k < parts[id - 1].len() => {
                    let mut rng = party_rng(seed, "batch", &[epoch as u64, id as u64]);
                    let mut idx: Vec<usize> = parts[id - 1].choose_multiple(&mut rng, k).copied().collect();
                    idx.sort_unstable();
                    idx
                }
                _ => parts[id - 1].clone(),
            };
            let labels = match &flipped {
                Some(f) if byzantine.contains(&id) => f.as_slice(),
                _ => train.labels.as_slice(),
            };
            let g = match &perturbations {
                None => model.gradient(&w, train, labels, &batch),
                Some(z) => zo_estimate(|v: &[f64]| model.loss(v, train, labels, &batch), &w, z, &cfg.zo)?,
            };
            gradients.push(g);
        }
        apply_attack(cfg, pcfg, &byzantine, &mut gradients, seed, epoch)?;

        let quantized: Vec<Vec<FieldElement>> = gradients
            .iter()
            .enumerate()
            .map(|(i, g)| {
                let mut rng = party_rng(seed, "quantize", &[epoch as u64, i as u64 + 1]);
                quantize(g, &pcfg.quant, &mut rng).map(|q| q.values)
            })
            .collect::<std::result::Result<_, _>>()?;

        let step = match aggregate(cfg.backend, &pcfg, &quantized, &all_ids, seed, epoch, &shared, &plan) {
            Ok(step) => step,
            Err(e @ byzagg_core::Error::ProtocolAbort { .. }) => {
                log::warn!("{rule} seed {seed}: epoch {epoch} aborted: {e}");
                return Ok(RunResult {
                    rule,
                    seed,
                    rows,
                    failure: Some(format!("epoch {epoch}: {e}")),
                });
            }
            Err(e) => return Err(e.into()),
        };
        for (wi, gi) in w.iter_mut().zip(&step.aggregate) {
            *wi -= cfg.learning_rate * gi;
        }

        rows.push(MetricsRow {
            seed,
            epoch,
            test_acc: model.accuracy(&w, test),
            train_loss: model.loss(&w, train, &train.labels, &everyone),
            bytes_user: step.bytes_user,
            bytes_fed: step.bytes_fed,
            wall_ms: if opts.timing { start.elapsed().as_millis() as u64 } else { 0 },
        });
    }
    Ok(RunResult {
        rule,
        seed,
        rows,
        failure: None,
    })
}

/// Replaces Byzantine clients' gradients according to the attack.
fn apply_attack(
    cfg: &ExperimentConfig,
    pcfg: ProtocolConfig,
    byzantine: &BTreeSet<ClientId>,
    gradients: &mut [Vec<f64>],
    seed: u64,
    epoch: usize,
) -> Result<()> {
    if byzantine.is_empty() {
        return Ok(());
    }
    let honest: Vec<Vec<f64>> = gradients
        .iter()
        .enumerate()
        .filter(|(i, _)| !byzantine.contains(&(i + 1)))
        .map(|(_, g)| g.clone())
        .collect();
    let crafted = match cfg.attack.kind {
        AttackKind::Alie => Some(attacks::alie(&honest, pcfg.b, &cfg.attack.grid, &pcfg.rule)?.gradient),
        AttackKind::Foe => Some(attacks::foe(&honest, pcfg.b, &cfg.attack.grid, &pcfg.rule)?.gradient),
        _ => None,
    };
    for &id in byzantine {
        let g = &mut gradients[id - 1];
        match cfg.attack.kind {
            AttackKind::Alie | AttackKind::Foe => g.clone_from(crafted.as_ref().expect("crafted above")),
            AttackKind::SignFlip => *g = attacks::sign_flip(g),
            AttackKind::RandomNoise => {
                let mut rng = party_rng(seed, "noise", &[epoch as u64, id as u64]);
                *g = attacks::random_noise(g.len(), cfg.attack.noise_scale, &mut rng);
            }
            // Label flipping acts on the data; message corruption on the protocol.
            AttackKind::LabelFlip | AttackKind::ShareCorruption | AttackKind::ResponseCorruption | AttackKind::None => {}
        }
    }
    Ok(())
}

struct Step {
    aggregate: Vec<f64>,
    bytes_user: f64,
    bytes_fed: u64,
}

#[allow(clippy::too_many_arguments)]
fn aggregate(
    backend: Backend,
    pcfg: &ProtocolConfig,
    quantized: &[Vec<FieldElement>],
    all_ids: &[ClientId],
    seed: u64,
    epoch: usize,
    shared: &SharedRandomness,
    plan: &byzagg_core::protocol::CorruptionPlan,
) -> byzagg_core::Result<Step> {
    let field = pcfg.quant.field;
    let (field_sum, normalizer, bytes_user, bytes_fed) = match backend {
        Backend::Protocol => {
            let ctx = RoundContext {
                round: epoch as u64,
                seed,
                shared,
                plan,
            };
            let res = run_round(pcfg, quantized, &ctx)?;
            let comm = res.comm();
            let fed = comm.federator().total() as u64;
            (res.field_sum, res.normalizer, comm.mean_client_total(all_ids), fed)
        }
        Backend::Plaintext => {
            let indices: Vec<Vec<i64>> = quantized.iter().map(|q| field.unembed_vec(q)).collect();
            let out = plaintext_round(pcfg, &indices, all_ids, pcfg.b)?;
            // Nominal cost of uploading one quantized gradient per client.
            let upload = (pcfg.d * field.element_bytes()) as u64;
            (out.field_sum, out.normalizer, upload as f64, upload * pcfg.n as u64)
        }
    };
    let sum = dequantize_sum(&field_sum, normalizer as u64, &pcfg.quant)?;
    let m = normalizer as f64;
    Ok(Step {
        aggregate: sum.into_iter().map(|v| v / m).collect(),
        bytes_user,
        bytes_fed,
    })
}
