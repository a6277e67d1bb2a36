//! Protocol rounds against the plaintext composition of mixing and selection.

use std::collections::BTreeSet;

use byzagg_core::field::PrimeField;
use byzagg_core::party::Party;
use byzagg_core::protocol::{
    plaintext_round, run_round, CorruptionPlan, DealStrategy, MessageKind, ProtocolConfig, RoundContext, RoundResult,
};
use byzagg_core::quant::QuantConfig;
use byzagg_core::robust::{RobustRule, Selection};
use byzagg_core::sharing::randomness::SharedRandomness;
use byzagg_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn config(n: usize, b: usize, z: usize, d: usize, selection: Selection, nnm: bool) -> ProtocolConfig {
    let quant = QuantConfig::new(16, 1.0, PrimeField::mersenne61()).unwrap();
    ProtocolConfig::new(n, b, z, d, RobustRule::new(selection, nnm), quant)
}

fn gradients(cfg: &ProtocolConfig, seed: u64) -> Vec<Vec<i64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x5eed);
    let m = cfg.quant.max_index();
    (0..cfg.n)
        .map(|_| (0..cfg.d).map(|_| rng.random_range(-m..=m)).collect())
        .collect()
}

fn round(cfg: &ProtocolConfig, xs: &[Vec<i64>], plan: &CorruptionPlan, seed: u64) -> Result<RoundResult> {
    let shared = SharedRandomness::from_u64(seed);
    let ctx = RoundContext {
        round: seed % 5,
        seed,
        shared: &shared,
        plan,
    };
    let inputs: Vec<_> = xs.iter().map(|x| cfg.quant.field.embed_vec(x).unwrap()).collect();
    run_round(cfg, &inputs, &ctx)
}

fn assert_matches_oracle(cfg: &ProtocolConfig, xs: &[Vec<i64>], res: &RoundResult, label: &str) {
    let oracle = plaintext_round(cfg, xs, &res.active, res.b_eff).unwrap();
    assert_eq!(res.field_sum, oracle.field_sum, "{label}");
    assert_eq!(res.selected, oracle.selected, "{label}");
    assert_eq!(res.normalizer, oracle.normalizer, "{label}");
    assert_eq!(res.raw_distances, oracle.raw_distances, "{label}");
}

#[test]
fn catalogue_matches_oracle() {
    let byz = BTreeSet::from([6, 7]);
    for (selection, n) in [(Selection::Krum, 7), (Selection::MultiKrum, 8)] {
        for nnm in [true, false] {
            let cfg = config(n, 2, 1, 4, selection, nnm);
            for seed in 0..12 {
                let xs = gradients(&cfg, seed);
                for (name, plan) in CorruptionPlan::catalogue(&byz) {
                    let res = round(&cfg, &xs, &plan, seed).unwrap();
                    assert_matches_oracle(&cfg, &xs, &res, &format!("{selection:?} nnm={nnm} seed={seed} {name}"));
                }
            }
        }
    }
}

#[test]
fn larger_thresholds() {
    // n > max(3b, 2(z + b)) with z = 2, b = 3.
    let cfg = config(11, 3, 2, 3, Selection::Krum, true);
    let byz = BTreeSet::from([2, 5, 9]);
    for seed in 0..4 {
        let xs = gradients(&cfg, seed);
        for (name, plan) in CorruptionPlan::catalogue(&byz) {
            let res = round(&cfg, &xs, &plan, seed).unwrap();
            assert_matches_oracle(&cfg, &xs, &res, name);
        }
    }
}

#[test]
fn private_final_aggregation_agrees() {
    let mut cfg = config(7, 2, 1, 4, Selection::Krum, true);
    cfg.private_final_aggregation = true;
    let byz = BTreeSet::from([1, 3]);
    for seed in 0..8 {
        let xs = gradients(&cfg, seed);
        for (name, plan) in CorruptionPlan::catalogue(&byz) {
            let res = round(&cfg, &xs, &plan, seed).unwrap();
            assert_matches_oracle(&cfg, &xs, &res, name);
        }
    }
}

#[test]
fn outlier_inputs_do_not_move_the_honest_aggregate() {
    // Honest clients share one gradient, Byzantine clients send extremes.
    let cfg = config(7, 2, 1, 3, Selection::Krum, true);
    let h = vec![3, -2, 5];
    let m = cfg.quant.max_index();
    let mut xs = vec![h.clone(); 5];
    xs.push(vec![m, m, m]);
    xs.push(vec![-m, m, -m]);
    let res = round(&cfg, &xs, &CorruptionPlan::all_messages(BTreeSet::from([6, 7])), 1).unwrap();
    let expect: Vec<i64> = h.iter().map(|v| v * 5).collect();
    assert_eq!(cfg.quant.field.unembed_vec(&res.field_sum), expect);
    assert!(res.selected.iter().all(|&id| id <= 5));
}

#[test]
fn one_inconsistent_dealer_is_dropped_from_the_oracle() {
    let cfg = config(7, 2, 1, 4, Selection::Krum, true);
    for seed in 0..6 {
        let xs = gradients(&cfg, seed);
        let plan = CorruptionPlan {
            byzantine: BTreeSet::from([4, 6]),
            deal: DealStrategy::Inconsistent,
            ..Default::default()
        };
        let res = round(&cfg, &xs, &plan, seed).unwrap();
        assert_eq!(res.excluded, vec![4, 6]);
        assert_eq!(res.b_eff, 0);
        assert_matches_oracle(&cfg, &xs, &res, "inconsistent");
    }
}

/// Message counts by kind for an honest round, from the protocol structure.
#[test]
fn message_counts_follow_the_schedule() {
    let (n, z, d) = (7usize, 1usize, 4usize);
    let mut cfg = config(n, 2, z, d, Selection::Krum, true);
    cfg.record_payloads = true;
    let xs = gradients(&cfg, 3);
    let res = round(&cfg, &xs, &CorruptionPlan::honest(), 3).unwrap();
    let pairs = n * (n - 1) / 2;
    let expected = [
        (MessageKind::Row, n * (n - 1), (z + 1) * d),
        (MessageKind::CrossCheck, n * n * (n - 1), d),
        (MessageKind::MismatchReport, n * n, 0),
        (MessageKind::DistanceShare, n, pairs),
        (MessageKind::Query, n * n, n),
        (MessageKind::Response, n * n, d),
        (MessageKind::MixtureShare, n * n, d),
        (MessageKind::MixtureDistanceShare, n, pairs),
        (MessageKind::Selection, 1, 0),
        (MessageKind::AggregateShare, n, d),
    ];
    let msgs = res.transcript.messages();
    for (kind, count, elements) in expected {
        let of_kind: Vec<_> = msgs.iter().filter(|m| m.kind == kind).collect();
        assert_eq!(of_kind.len(), count, "{kind:?}");
        assert!(of_kind.iter().all(|m| m.element_count == elements), "{kind:?}");
        assert!(of_kind.iter().all(|m| m.size_bytes == 8 * elements + 4 * m.id_count), "{kind:?}");
    }
    assert_eq!(msgs.len(), expected.iter().map(|e| e.1).sum::<usize>());

    // The federator receives distance shares twice, responses and aggregate shares.
    let comm = res.comm();
    let fed_rx = 8 * (2 * n * pairs + n * n * d + n * d);
    assert_eq!(comm.federator().received, fed_rx);
    assert_eq!(comm.party(Party::Client(1)).received, {
        let rows = (n - 1) * (z + 1) * d;
        let checks = n * (n - 1) * d;
        let from_fed = n * n + n * d;
        8 * (rows + checks + from_fed) + 4 * res.selected.len()
    });
}
