//! Training-level properties: the protocol path reproduces the plaintext
//! path, and averaging-equivalent settings reproduce plain FedSGD.

use byzagg::config::{Backend, DataSpec, ExperimentConfig, Optimizer, RuleVariant};
use byzagg::data::{BlobSpec, Dataset};
use byzagg::experiment::{load_data, run_experiment, RunOptions};
use byzagg::model::LogReg;
use byzagg::partition::dirichlet_partition;
use byzagg::selftest::trend_config;
use byzagg_core::attacks::{AttackKind, AttackSpec};
use byzagg_core::quant::{quantize, QuantConfig};
use byzagg_core::sharing::randomness::party_rng;
use byzagg_core::PrimeField;

fn small(attack: AttackKind, epochs: usize) -> ExperimentConfig {
    let mut cfg = trend_config(attack, vec![3, 4], epochs);
    cfg.protocol.n = 7;
    cfg.protocol.b = 2;
    cfg.data = DataSpec::Synthetic(BlobSpec {
        train: 700,
        test: 200,
        features: 6,
        ..BlobSpec::default()
    });
    cfg.rules = vec![RuleVariant::ALL[0], RuleVariant::ALL[1]];
    cfg
}

#[test]
fn protocol_and_plaintext_trajectories_agree() {
    for attack in [
        AttackKind::None,
        AttackKind::Alie,
        AttackKind::SignFlip,
        AttackKind::LabelFlip,
        AttackKind::ShareCorruption,
        AttackKind::ResponseCorruption,
    ] {
        let mut cfg = small(attack, 6);
        let protocol = run_experiment(&cfg, &RunOptions::default()).unwrap();
        cfg.backend = Backend::Plaintext;
        let plain = run_experiment(&cfg, &RunOptions::default()).unwrap();
        for (a, b) in protocol.runs.iter().zip(&plain.runs) {
            assert!(a.failure.is_none(), "{attack:?}: {:?}", a.failure);
            let key = |r: &byzagg::RunResult| r.rows.iter().map(|m| (m.test_acc.to_bits(), m.train_loss.to_bits())).collect::<Vec<_>>();
            assert_eq!(key(a), key(b), "{attack:?} {} seed {}", a.rule, a.seed);
        }
    }
}

#[test]
fn zero_order_protocol_matches_plaintext() {
    let mut cfg = small(AttackKind::SignFlip, 4);
    cfg.optimizer = Optimizer::Zo;
    cfg.zo.r = 8;
    cfg.zo.average = true;
    let protocol = run_experiment(&cfg, &RunOptions::default()).unwrap();
    cfg.backend = Backend::Plaintext;
    let plain = run_experiment(&cfg, &RunOptions::default()).unwrap();
    for (a, b) in protocol.runs.iter().zip(&plain.runs) {
        assert_eq!(a.rows.iter().map(|m| m.train_loss.to_bits()).collect::<Vec<_>>(), b.rows.iter().map(|m| m.train_loss.to_bits()).collect::<Vec<_>>());
    }
}

/// Independent FedSGD: every client's quantized gradient, averaged directly.
fn fedsgd_losses(cfg: &ExperimentConfig, train: &Dataset, seed: u64) -> Vec<f64> {
    let model = LogReg::for_dataset(train);
    let n = cfg.protocol.n;
    let quant = QuantConfig::new(cfg.protocol.levels, cfg.protocol.clip, PrimeField::mersenne61()).unwrap();
    let parts = dirichlet_partition(&train.labels, train.classes, n, cfg.dirichlet_beta, &mut party_rng(seed, "partition", &[])).unwrap();
    let everyone: Vec<usize> = (0..train.len()).collect();
    let mut w = vec![0.0; model.dim()];
    let mut losses = Vec::new();
    for epoch in 0..cfg.epochs {
        let mut mean = vec![0.0; w.len()];
        for id in 1..=n {
            let g = model.gradient(&w, train, &train.labels, &parts[id - 1]);
            let mut rng = party_rng(seed, "quantize", &[epoch as u64, id as u64]);
            let q = quantize(&g, &quant, &mut rng).unwrap();
            for (m, k) in mean.iter_mut().zip(q.indices(&quant.field)) {
                *m += quant.grid_value(k) / n as f64;
            }
        }
        for (wi, gi) in w.iter_mut().zip(&mean) {
            *wi -= cfg.learning_rate * gi;
        }
        losses.push(model.loss(&w, train, &train.labels, &everyone));
    }
    losses
}

#[test]
fn no_byzantine_budget_reduces_to_fedsgd() {
    // With b = 0 every mixture is the sum of all gradients, so any selection
    // yields their mean.
    let mut cfg = small(AttackKind::None, 8);
    cfg.protocol.b = 0;
    cfg.rules = vec![RuleVariant { multi: true, nnm: true }];
    let out = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let (train, _) = load_data(&cfg.data).unwrap();
    for run in &out.runs {
        let expect = fedsgd_losses(&cfg, &train, run.seed);
        for (row, e) in run.rows.iter().zip(&expect) {
            assert!((row.train_loss - e).abs() <= 1e-12 * e.abs(), "seed {} epoch {}: {} vs {e}", run.seed, row.epoch, row.train_loss);
        }
    }
}

#[test]
fn clean_training_exceeds_ninety_percent() {
    // The averaging-equivalent setting (b = 0) through the full protocol.
    let mut cfg = trend_config(AttackKind::None, vec![1], 400);
    cfg.protocol.b = 0;
    cfg.rules = vec![RuleVariant { multi: true, nnm: true }];
    cfg.attack = AttackSpec::new(AttackKind::None);
    let out = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let best = out.runs[0].max_accuracy();
    assert!(best > 0.9, "best accuracy {best}");
}

#[test]
fn sign_flip_margin_in_most_seeds() {
    let cfg = {
        let mut c = trend_config(AttackKind::SignFlip, (10..15).collect(), 60);
        c.rules = vec![RuleVariant::ALL[0], RuleVariant::ALL[1]];
        c.backend = Backend::Plaintext;
        c
    };
    let out = run_experiment(&cfg, &RunOptions::default()).unwrap();
    let wins = cfg
        .seeds
        .iter()
        .filter(|&&s| {
            let acc = |rule| out.runs.iter().find(|r| r.rule == rule && r.seed == s).unwrap().final_accuracy();
            acc(RuleVariant::ALL[1]) > acc(RuleVariant::ALL[0])
        })
        .count();
    assert!(wins >= 4, "KR-NNM ahead in {wins} of 5 seeds");
}
