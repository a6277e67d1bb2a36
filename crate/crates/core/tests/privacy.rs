//! Chi-squared indistinguishability of party views at q = 31, d = 1, n = 7,
//! z = 2.

use byzagg_core::audit::{collect_views, compare_views, distance_share_coefficients, neighbor_sets_of, Observer};
use byzagg_core::field::PrimeField;
use byzagg_core::protocol::{ProtocolConfig, Step};
use byzagg_core::quant::QuantConfig;
use byzagg_core::robust::{RobustRule, Selection};

const TRIALS: usize = 3000;

fn small(b: usize) -> ProtocolConfig {
    let quant = QuantConfig::new(4, 1.0, PrimeField::new(31).unwrap()).unwrap();
    let mut cfg = ProtocolConfig::new(7, b, 2, 1, RobustRule::new(Selection::Krum, true), quant);
    cfg.private_final_aggregation = true;
    cfg
}

fn with_client(base: &[i64], id: usize, v: i64) -> Vec<Vec<i64>> {
    let mut xs: Vec<Vec<i64>> = base.iter().map(|&x| vec![x]).collect();
    xs[id - 1] = vec![v];
    xs
}

#[test]
fn coalition_cannot_tell_gradients_or_neighbour_sets_apart() {
    let cfg = small(1);
    let field = cfg.quant.field;
    let base = [0, 1, 2, -1, 3, -2, 1];
    let sets = neighbor_sets_of(&cfg, &with_client(&base, 3, 2), 0).unwrap();
    let other = (-7..=7)
        .find(|&v| neighbor_sets_of(&cfg, &with_client(&base, 3, v), 0).unwrap() != sets)
        .expect("some value of client 3 changes the neighbour sets");
    let coalition = Observer::Coalition(vec![1, 2]);
    let a = collect_views(&cfg, &with_client(&base, 3, 2), &coalition, TRIALS, 10_000).unwrap();
    let b = collect_views(&cfg, &with_client(&base, 3, other), &coalition, TRIALS, 20_000).unwrap();
    let report = compare_views(&field, &a, &b, 20, 0.01, 1).unwrap();
    assert!(report.passes(), "{report:?}");
}

#[test]
fn federator_retrieval_views_match_for_mirrored_inputs() {
    let cfg = small(0);
    let field = cfg.quant.field;
    let xs: Vec<Vec<i64>> = (-3..=3).map(|v| vec![v]).collect();
    let mirrored: Vec<Vec<i64>> = xs.iter().map(|v| vec![-v[0]]).collect();
    let fed = Observer::Federator(vec![Step::PadShares, Step::SumRetrieval, Step::Reencode, Step::Unpad]);
    let a = collect_views(&cfg, &xs, &fed, TRIALS, 30_000).unwrap();
    let b = collect_views(&cfg, &mirrored, &fed, TRIALS, 40_000).unwrap();
    let report = compare_views(&field, &a, &b, 20, 0.01, 2).unwrap();
    assert!(report.passes(), "{report:?}");
}

#[test]
fn rerandomizer_hides_distance_cross_terms() {
    let mut cfg = small(1);
    let xs: Vec<Vec<i64>> = (-3..=3).map(|v| vec![v]).collect();
    let masked = distance_share_coefficients(&cfg, &xs, TRIALS, 50_000).unwrap();
    assert!(masked.iter().all(|&p| p >= 0.01 / masked.len() as f64), "{masked:?}");
    cfg.rerandomize = false;
    let bare = distance_share_coefficients(&cfg, &xs, TRIALS, 50_000).unwrap();
    // The top coefficient is a square without the mask.
    assert!(bare[bare.len() - 1] < 1e-6, "{bare:?}");
}
