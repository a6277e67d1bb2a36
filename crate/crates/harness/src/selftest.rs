//! Acceptance suite: nine numbered checks, each returning a pass/fail line.
//!
//! The suite writes `selftest.csv` (one row per check) and the training
//! CSVs it produces under the output directory. Nothing written depends on
//! wall-clock time, so two runs with the same seed produce identical files.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use byzagg_core::attacks::{AttackKind, AttackSpec};
use byzagg_core::audit::{collect_views, compare_views, distance_share_coefficients, neighbor_sets_of, Observer};
use byzagg_core::field::{FieldElement, PrimeField};
use byzagg_core::party::ClientId;
use byzagg_core::poly::Polynomial;
use byzagg_core::protocol::{
    loglog_slope, plaintext_round, run_round, CorruptionPlan, ProtocolConfig, RoundContext, RoundResult, Step,
};
use byzagg_core::quant::{dequantize, quantize, QuantConfig};
use byzagg_core::robust::{default_krum_kappa, nnm_kappa, robustness_check, RobustRule, Selection};
use byzagg_core::rs::rs_decode_constants;
use byzagg_core::sharing::randomness::{party_rng, SharedRandomness};
use byzagg_core::zo::{sample_perturbations, zo_estimate, ZoConfig};
use byzagg_core::Error;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{Backend, DataSpec, ExperimentConfig, Optimizer, ProtocolSection, RuleVariant};
use crate::data::BlobSpec;
use crate::error::{io_err, Result};
use crate::experiment::{run_experiment, ExperimentOutput, RunOptions};
use crate::report;

#[derive(Clone, Debug)]
pub struct SelftestOptions {
    pub out_dir: PathBuf,
    pub seed: u64,
    /// Reduced trial counts and training length, for smoke runs. Quick
    /// results are not evidence for the criteria.
    pub quick: bool,
    /// Run only these checks (1-based); all when empty.
    pub only: Vec<usize>,
}

impl SelftestOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            seed: 2024,
            quick: false,
            only: Vec::new(),
        }
    }

    fn scale(&self, full: usize, quick: usize) -> usize {
        if self.quick {
            quick
        } else {
            full
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Outcome {
    pub criterion: usize,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    #[serde(skip)]
    pub seconds: f64,
}

impl Outcome {
    pub fn line(&self) -> String {
        format!(
            "[{}] {}. {}: {} ({:.1} s)",
            if self.passed { "PASS" } else { "FAIL" },
            self.criterion,
            self.name,
            self.detail,
            self.seconds
        )
    }
}

pub const NAMES: [&str; 9] = [
    "oracle equivalence",
    "error correction",
    "quantizer unbiasedness",
    "privacy proxies",
    "robustness audit",
    "communication scaling",
    "training trends",
    "zero-order sanity",
    "determinism",
];

/// Runs the selected checks in order, printing each line as it completes,
/// and writes `selftest.csv`.
pub fn run_all(opts: &SelftestOptions) -> Result<Vec<Outcome>> {
    std::fs::create_dir_all(&opts.out_dir).map_err(io_err(&opts.out_dir))?;
    let mut outcomes = Vec::new();
    for id in 1..=NAMES.len() {
        if !opts.only.is_empty() && !opts.only.contains(&id) {
            continue;
        }
        let o = run_one(id, opts)?;
        println!("{}", o.line());
        outcomes.push(o);
    }
    let path = opts.out_dir.join("selftest.csv");
    let mut w = csv::Writer::from_path(&path)?;
    for o in &outcomes {
        w.serialize(o)?;
    }
    w.flush().map_err(io_err(&path))?;
    Ok(outcomes)
}

pub fn run_one(id: usize, opts: &SelftestOptions) -> Result<Outcome> {
    let start = Instant::now();
    let (passed, detail) = match id {
        1 => oracle_equivalence(opts)?,
        2 => error_correction(opts)?,
        3 => quantizer_unbiasedness(opts)?,
        4 => privacy(opts)?,
        5 => robustness(opts)?,
        6 => communication(opts)?,
        7 => training_trends(opts)?,
        8 => zero_order(opts)?,
        9 => determinism(opts)?,
        _ => return Err(crate::HarnessError::Config(format!("no check numbered {id}"))),
    };
    let seconds = start.elapsed().as_secs_f64();
    let limit = match id {
        1 => Some(120.0),
        6 => Some(300.0),
        7 => Some(1800.0),
        _ => None,
    };
    let over = limit.is_some_and(|l| seconds > l) && !opts.quick;
    Ok(Outcome {
        criterion: id,
        name: NAMES[id - 1],
        passed: passed && !over,
        detail: if over { format!("{detail}; over the time budget") } else { detail },
        seconds,
    })
}

fn mersenne_config(n: usize, b: usize, z: usize, d: usize, rule: RobustRule, levels: u32) -> Result<ProtocolConfig> {
    let quant = QuantConfig::new(levels, 1.0, PrimeField::mersenne61())?;
    Ok(ProtocolConfig::new(n, b, z, d, rule, quant))
}

fn random_indices<R: Rng>(cfg: &ProtocolConfig, rng: &mut R) -> Vec<Vec<i64>> {
    let m = cfg.quant.max_index();
    let lo = cfg.quant.min_index();
    (0..cfg.n).map(|_| (0..cfg.d).map(|_| rng.random_range(lo..=m)).collect()).collect()
}

fn protocol_round(cfg: &ProtocolConfig, xs: &[Vec<i64>], plan: &CorruptionPlan, round: u64, seed: u64) -> byzagg_core::Result<RoundResult> {
    let shared = SharedRandomness::from_u64(seed);
    let ctx = RoundContext {
        round,
        seed,
        shared: &shared,
        plan,
    };
    let inputs = xs.iter().map(|x| cfg.quant.field.embed_vec(x)).collect::<byzagg_core::Result<Vec<_>>>()?;
    run_round(cfg, &inputs, &ctx)
}

fn oracle_equivalence(opts: &SelftestOptions) -> Result<(bool, String)> {
    let seeds = opts.scale(200, 20) as u64;
    let byz: BTreeSet<ClientId> = BTreeSet::from([2, 5]);
    let mut checked = 0usize;
    let mut mismatches = Vec::new();
    for (selection, n) in [(Selection::Krum, 7), (Selection::MultiKrum, 8)] {
        let cfg = mersenne_config(n, 2, 1, 6, RobustRule::new(selection, true), 16)?;
        let results: Vec<(usize, Vec<String>)> = (0..seeds)
            .into_par_iter()
            .map(|s| {
                let seed = opts.seed.wrapping_add(s);
                let xs = random_indices(&cfg, &mut party_rng(seed, "equivalence-inputs", &[n as u64]));
                let mut bad = Vec::new();
                let mut count = 0;
                for (name, plan) in CorruptionPlan::catalogue(&byz) {
                    count += 1;
                    let ok = protocol_round(&cfg, &xs, &plan, s, seed).and_then(|res| {
                        let oracle = plaintext_round(&cfg, &xs, &res.active, res.b_eff)?;
                        Ok(res.field_sum == oracle.field_sum && res.selected == oracle.selected && res.normalizer == oracle.normalizer)
                    });
                    match ok {
                        Ok(true) => {}
                        Ok(false) => bad.push(format!("{selection:?}/{name}/seed {seed}")),
                        Err(e) => bad.push(format!("{selection:?}/{name}/seed {seed}: {e}")),
                    }
                }
                (count, bad)
            })
            .collect();
        for (c, bad) in results {
            checked += c;
            mismatches.extend(bad);
        }
    }
    let mut detail = format!("{checked} rounds over {seeds} seeds, {} mismatches", mismatches.len());
    if let Some(first) = mismatches.first() {
        let _ = write!(detail, " (first: {first})");
    }
    Ok((mismatches.is_empty(), detail))
}

/// Distance shares as the protocol forms them: the squared distance of two
/// degree-`z` sharings plus a shared zero-constant polynomial of degree `2z`.
fn error_correction(opts: &SelftestOptions) -> Result<(bool, String)> {
    let f = PrimeField::mersenne61();
    let (n, z, b, d) = (7usize, 1usize, 2usize, 4usize);
    let trials = opts.scale(1000, 200);
    let xs: Vec<FieldElement> = (1..=n as u64).map(|i| f.elem(i)).collect();
    let mut rng = party_rng(opts.seed, "error-correction", &[]);
    let (mut b_ok, mut loud, mut wrong, mut other) = (0, 0, 0, 0);
    for _ in 0..trials {
        let gi: Vec<i64> = (0..d).map(|_| rng.random_range(-512..=512)).collect();
        let gj: Vec<i64> = (0..d).map(|_| rng.random_range(-512..=512)).collect();
        let truth = f.embed_signed(gi.iter().zip(&gj).map(|(a, c)| (a - c) * (a - c)).sum())?;
        let share = |g: &[i64], rng: &mut rand_chacha::ChaCha20Rng| -> Result<Vec<Polynomial>> {
            g.iter()
                .map(|&v| Ok(Polynomial::random_with_constant(&f, f.embed_signed(v)?, z, rng)))
                .collect()
        };
        let pi = share(&gi, &mut rng)?;
        let pj = share(&gj, &mut rng)?;
        let lambda = Polynomial::random_with_constant(&f, f.zero(), 2 * z, &mut rng);
        let clean: Vec<FieldElement> = xs
            .iter()
            .map(|&x| {
                let si: Vec<FieldElement> = pi.iter().map(|p| p.eval(&f, x)).collect();
                let sj: Vec<FieldElement> = pj.iter().map(|p| p.eval(&f, x)).collect();
                f.add(f.squared_distance(&si, &sj), lambda.eval(&f, x))
            })
            .collect();
        for corrupted in [b, b + 1] {
            let mut rows: Vec<Vec<FieldElement>> = clean.iter().map(|&v| vec![v]).collect();
            for p in sample(&mut rng, n, corrupted) {
                let delta = loop {
                    let v = f.random(&mut rng);
                    if !v.is_zero() {
                        break v;
                    }
                };
                rows[p][0] = f.add(rows[p][0], delta);
            }
            match (corrupted == b, rs_decode_constants(&f, &xs, &rows, 2 * z, b)) {
                (true, Ok(v)) if v[0] == truth => b_ok += 1,
                (false, Err(Error::DecodingFailure { .. })) => loud += 1,
                (_, Ok(v)) if v[0] != truth => wrong += 1,
                _ => other += 1,
            }
        }
    }
    let passed = b_ok == trials && wrong == 0 && other == 0 && loud * 100 >= 95 * trials;
    Ok((
        passed,
        format!("{b_ok}/{trials} decoded with {b} errors; {loud}/{trials} loud failures with {}; {wrong} wrong values; {other} other outcomes", b + 1),
    ))
}

fn quantizer_unbiasedness(opts: &SelftestOptions) -> Result<(bool, String)> {
    let draws = opts.scale(100_000, 10_000);
    let mut worst = 0usize;
    let mut parts = Vec::new();
    for levels in [9u32, 16] {
        let c = QuantConfig::new(levels, 1.0, PrimeField::mersenne61())?;
        let values: Vec<f64> = {
            let mut rng = party_rng(opts.seed, "quantizer-values", &[levels as u64]);
            let mut v = Vec::new();
            while v.len() < 50 {
                let x: f64 = rng.random_range(-c.clip..c.clip);
                let pos = (x + c.clip) / c.step();
                if (pos - pos.round()).abs() > 1e-3 {
                    v.push(x);
                }
            }
            v
        };
        let exceed = values
            .par_iter()
            .enumerate()
            .map(|(i, &x)| -> Result<bool> {
                let mut rng = party_rng(opts.seed, "quantizer-draws", &[levels as u64, i as u64]);
                let lo = -c.clip + ((x + c.clip) / c.step()).floor() * c.step();
                let p = (x - lo) / c.step();
                let se = c.step() * (p * (1.0 - p) / draws as f64).sqrt();
                let mut sum = 0.0;
                for _ in 0..draws {
                    sum += dequantize(&quantize(&[x], &c, &mut rng)?, &c)?[0];
                }
                Ok((sum / draws as f64 - x).abs() > 3.0 * se)
            })
            .collect::<Result<Vec<bool>>>()?
            .into_iter()
            .filter(|&e| e)
            .count();
        worst = worst.max(exceed);
        parts.push(format!("{levels} levels: {exceed}/50 beyond 3 SE"));
    }
    Ok((worst <= 2, format!("{} ({draws} draws each)", parts.join(", "))))
}

fn small_field_config(b: usize) -> Result<ProtocolConfig> {
    let quant = QuantConfig::new(4, 1.0, PrimeField::new(31)?)?;
    let mut cfg = ProtocolConfig::new(7, b, 2, 1, RobustRule::new(Selection::Krum, true), quant);
    cfg.private_final_aggregation = true;
    Ok(cfg)
}

fn with_client(base: &[i64], id: usize, v: i64) -> Vec<Vec<i64>> {
    let mut xs: Vec<Vec<i64>> = base.iter().map(|&x| vec![x]).collect();
    xs[id - 1] = vec![v];
    xs
}

fn privacy(opts: &SelftestOptions) -> Result<(bool, String)> {
    let trials = opts.scale(10_000, 2000);
    let alpha = 0.01;
    let projections = 20;
    let seed = opts.seed;
    let mut lines = Vec::new();
    let mut passed = true;

    // (a) Coalition {1, 2} while client 3 changes its gradient, first with
    // unchanged neighbour sets, then with different ones.
    let cfg = small_field_config(1)?;
    let field = cfg.quant.field;
    let base = [0, 1, 2, -1, 3, -2, 1];
    // Neighbour sets as sets, ignoring the nearest-first order.
    let sets_of = |v: i64| -> byzagg_core::Result<Vec<Vec<usize>>> {
        let sets = neighbor_sets_of(&cfg, &with_client(&base, 3, v), 0)?.expect("mixing is on");
        Ok((0..sets.len())
            .map(|j| {
                let mut p = sets.positions(j).to_vec();
                p.sort_unstable();
                p
            })
            .collect())
    };
    let sets: Vec<_> = (-7..=7).map(|v| sets_of(v).map(|s| (v, s))).collect::<byzagg_core::Result<_>>()?;
    let mut same = None;
    let mut differ = None;
    for (i, (u, su)) in sets.iter().enumerate() {
        for (v, sv) in &sets[i + 1..] {
            if su == sv {
                same.get_or_insert((*u, *v));
            } else {
                differ.get_or_insert((*u, *v));
            }
        }
    }
    let coalition = Observer::Coalition(vec![1, 2]);
    for (k, (label, pair)) in [("same neighbour sets", same), ("different neighbour sets", differ)].into_iter().enumerate() {
        let Some((u, v)) = pair else {
            passed = false;
            lines.push(format!("coalition/{label}: no such pair of values"));
            continue;
        };
        let offset = 1_000_000 * (2 * k as u64 + 1);
        let view_a = collect_views(&cfg, &with_client(&base, 3, u), &coalition, trials, seed.wrapping_add(offset))?;
        let view_b = collect_views(&cfg, &with_client(&base, 3, v), &coalition, trials, seed.wrapping_add(offset + 1_000_000))?;
        let r = compare_views(&field, &view_a, &view_b, projections, alpha, seed.wrapping_add(k as u64))?;
        passed &= r.passes();
        lines.push(format!("coalition/{label} ({u} vs {v}): min p {:.3e} over {} tests", r.min_p_value, r.projections));
    }

    // (b) Federator, steps 4 to 7, on mirrored inputs: same distances, same
    // (zero) aggregate.
    let cfg0 = small_field_config(0)?;
    let xs: Vec<Vec<i64>> = (-3..=3).map(|v| vec![v]).collect();
    let mirrored: Vec<Vec<i64>> = xs.iter().map(|v| vec![-v[0]]).collect();
    let fed = Observer::Federator(vec![Step::PadShares, Step::SumRetrieval, Step::Reencode, Step::Unpad]);
    let a = collect_views(&cfg0, &xs, &fed, trials, seed.wrapping_add(5_000_000))?;
    let b = collect_views(&cfg0, &mirrored, &fed, trials, seed.wrapping_add(6_000_000))?;
    let r = compare_views(&field, &a, &b, projections, alpha, seed.wrapping_add(2))?;
    passed &= r.passes();
    lines.push(format!("federator: min p {:.3e} over {} tests", r.min_p_value, r.projections));

    // Distance shares: masked coefficients look uniform; without the mask the
    // same test must reject.
    let mut cfg1 = small_field_config(1)?;
    let masked = distance_share_coefficients(&cfg1, &xs, trials, seed.wrapping_add(7_000_000))?;
    let masked_min = masked.iter().copied().fold(1.0, f64::min);
    let masked_ok = masked_min >= alpha / masked.len() as f64;
    cfg1.rerandomize = false;
    let bare = distance_share_coefficients(&cfg1, &xs, trials, seed.wrapping_add(7_000_000))?;
    let bare_min = bare.iter().copied().fold(1.0, f64::min);
    let control_ok = bare_min < alpha / bare.len() as f64;
    passed &= masked_ok && control_ok;
    lines.push(format!("distance shares: min p {masked_min:.3e} masked, {bare_min:.3e} unmasked control"));

    Ok((passed, format!("{trials} trials; {}", lines.join("; "))))
}

fn robustness(opts: &SelftestOptions) -> Result<(bool, String)> {
    let instances = opts.scale(1000, 100);
    let (n, b, d) = (10usize, 2usize, 5usize);
    let kappa = default_krum_kappa(n, b);
    let coeff = nnm_kappa(n, b, kappa);
    let cfg = mersenne_config(n, b, 1, d, RobustRule::new(Selection::Krum, true), 33)?;
    let byz: BTreeSet<ClientId> = BTreeSet::from([n - 1, n]);
    let honest: Vec<usize> = (0..n - b).collect();
    let m = cfg.quant.max_index();

    let run = |identical: bool, i: usize| -> Result<bool> {
        let seed = opts.seed.wrapping_add(i as u64);
        let mut rng = party_rng(seed, "robustness", &[identical as u64]);
        let h: Vec<i64> = (0..d).map(|_| rng.random_range(-m / 4..=m / 4)).collect();
        let mut xs: Vec<Vec<i64>> = (0..n - b)
            .map(|_| {
                if identical {
                    h.clone()
                } else {
                    (0..d).map(|_| rng.random_range(-m / 4..=m / 4)).collect()
                }
            })
            .collect();
        for _ in 0..b {
            xs.push((0..d).map(|_| if rng.random_bool(0.5) { m } else { -m }).collect());
        }
        let res = protocol_round(&cfg, &xs, &CorruptionPlan::all_messages(byz.clone()), i as u64, seed)?;
        // Work in grid units, where every value is an exact integer.
        let sum = cfg.quant.field.unembed_vec(&res.field_sum);
        let out: Vec<f64> = sum.iter().map(|&s| s as f64 / res.normalizer as f64).collect();
        let vectors: Vec<Vec<f64>> = xs.iter().map(|x| x.iter().map(|&v| v as f64).collect()).collect();
        Ok(robustness_check(&out, &vectors, &honest, coeff).holds())
    };
    let exact_violations = (0..instances)
        .into_par_iter()
        .map(|i| run(true, i))
        .collect::<Result<Vec<bool>>>()?
        .iter()
        .filter(|&&ok| !ok)
        .count();
    let general_violations = (0..instances)
        .into_par_iter()
        .map(|i| run(false, i))
        .collect::<Result<Vec<bool>>>()?
        .iter()
        .filter(|&&ok| !ok)
        .count();
    Ok((
        exact_violations == 0,
        format!(
            "identical honest: {exact_violations}/{instances} violations; general with kappa {kappa:.2} (coefficient {coeff:.2}): {general_violations}/{instances} violations, not gated"
        ),
    ))
}

fn comm_point(n: usize, d: usize, seed: u64) -> Result<(f64, f64)> {
    let (b, z) = (2usize, 1usize);
    let cfg = mersenne_config(n, b, z, d, RobustRule::new(Selection::Krum, true), 16)?;
    let xs = random_indices(&cfg, &mut party_rng(seed, "comm", &[n as u64, d as u64]));
    let res = protocol_round(&cfg, &xs, &CorruptionPlan::honest(), 0, seed)?;
    let comm = res.comm();
    let ids: Vec<ClientId> = (1..=n).collect();
    Ok((comm.mean_client_total(&ids), comm.federator().total() as f64))
}

fn communication(opts: &SelftestOptions) -> Result<(bool, String)> {
    let ns = [7usize, 9, 11, 13, 15];
    let ds = [50usize, 100, 200, 400];
    let (fixed_d, fixed_n) = (100, 9);
    let by_n = ns
        .iter()
        .map(|&n| comm_point(n, fixed_d, opts.seed).map(|(u, f)| ((n as f64, u), (n as f64, f))))
        .collect::<Result<Vec<_>>>()?;
    let by_d = ds
        .iter()
        .map(|&d| comm_point(fixed_n, d, opts.seed).map(|(u, _)| (d as f64, u)))
        .collect::<Result<Vec<_>>>()?;
    let user_n = loglog_slope(&by_n.iter().map(|p| p.0).collect::<Vec<_>>());
    let fed_n = loglog_slope(&by_n.iter().map(|p| p.1).collect::<Vec<_>>());
    let user_d = loglog_slope(&by_d);
    let passed = (user_n - 2.0).abs() <= 0.3 && (user_d - 1.0).abs() <= 0.1 && (2.0..=3.0).contains(&fed_n);
    Ok((
        passed,
        format!("per-user slope vs n {user_n:.3} (d={fixed_d}), vs d {user_d:.3} (n={fixed_n}); federator slope vs n {fed_n:.3}"),
    ))
}

/// Training setup shared by the trend and determinism checks.
pub fn trend_config(attack: AttackKind, seeds: Vec<u64>, epochs: usize) -> ExperimentConfig {
    ExperimentConfig {
        name: format!("trend_{}", attack_label(attack)),
        seeds,
        epochs,
        learning_rate: 0.5,
        optimizer: Optimizer::Sgd,
        backend: Backend::Protocol,
        batch_size: None,
        rules: RuleVariant::ALL.to_vec(),
        dirichlet_beta: 0.1,
        protocol: ProtocolSection {
            n: 15,
            b: 3,
            z: 1,
            levels: 1024,
            clip: 1.0,
            modulus: None,
            restart_on_vss_failure: false,
            private_final_aggregation: false,
        },
        zo: ZoConfig::default(),
        attack: AttackSpec::new(attack),
        data: DataSpec::Synthetic(BlobSpec::default()),
    }
}

pub fn attack_label(kind: AttackKind) -> &'static str {
    match kind {
        AttackKind::None => "none",
        AttackKind::Alie => "alie",
        AttackKind::Foe => "foe",
        AttackKind::SignFlip => "sf",
        AttackKind::LabelFlip => "lf",
        AttackKind::RandomNoise => "noise",
        AttackKind::ShareCorruption => "shares",
        AttackKind::ResponseCorruption => "responses",
    }
}

fn mean_max(out: &ExperimentOutput, rule: RuleVariant) -> f64 {
    let runs: Vec<_> = out.runs_for(rule).collect();
    100.0 * runs.iter().map(|r| r.max_accuracy()).sum::<f64>() / runs.len() as f64
}

fn training_trends(opts: &SelftestOptions) -> Result<(bool, String)> {
    let seeds: Vec<u64> = (0..opts.scale(5, 2) as u64).map(|s| opts.seed.wrapping_add(s)).collect();
    let epochs = opts.scale(TREND_EPOCHS, 10);
    let dir = opts.out_dir.join("trends");
    let [kr, kr_nnm, mkr, mkr_nnm] = RuleVariant::ALL;
    let mut passed = true;
    let mut parts = Vec::new();
    for attack in [AttackKind::Alie, AttackKind::Foe, AttackKind::SignFlip, AttackKind::LabelFlip] {
        let cfg = trend_config(attack, seeds.clone(), epochs);
        let out = run_experiment(&cfg, &RunOptions::default())?;
        report::write_outputs(&dir, &out)?;
        let failed = out.runs.iter().filter(|r| r.failure.is_some()).count();
        let [a, b, c, d] = [kr, kr_nnm, mkr, mkr_nnm].map(|r| mean_max(&out, r));
        let mut ok = b > a && d >= c - 1.0 && failed == 0;
        if attack == AttackKind::SignFlip {
            ok &= b - a >= 5.0;
        }
        passed &= ok;
        parts.push(format!(
            "{}: KR {a:.1} KR-NNM {b:.1} MKR {c:.1} MKR-NNM {d:.1}{}{}",
            attack_label(attack),
            if failed > 0 { format!(" ({failed} failed runs)") } else { String::new() },
            if ok { "" } else { " [order violated]" }
        ));
    }
    Ok((passed, format!("{} seeds x {epochs} epochs; {}", seeds.len(), parts.join("; "))))
}

/// Epochs per training run in the trend check.
pub const TREND_EPOCHS: usize = 100;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn zero_order(opts: &SelftestOptions) -> Result<(bool, String)> {
    // Linear loss: each single-direction estimate is d (a . z) z up to
    // floating-point cancellation in the finite difference.
    let d = 20;
    let mut rng = party_rng(opts.seed, "zo-linear", &[]);
    let a: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let zs = sample_perturbations(d, 64, &SharedRandomness::from_u64(opts.seed), 0);
    let mut worst_linear: f64 = 0.0;
    let mut linear_ok = true;
    for mu in [1e-3, 1e-1, 1.0] {
        let cfg = ZoConfig { r: 1, zo_mu: mu, average: false };
        for z in &zs {
            let est = zo_estimate(|x: &[f64]| dot(&a, x), &w, std::slice::from_ref(z), &cfg)?;
            let proj = d as f64 * dot(&a, z);
            // Rounding of F(w +- mu z) is at most a few ulps of their
            // magnitude; dividing by 2 mu and scaling by d bounds the error.
            let scale = dot(&a, &w).abs() + mu * a.iter().map(|x| x.abs()).sum::<f64>() + dot(&a, &w).abs().max(1.0);
            let tol = 16.0 * f64::EPSILON * d as f64 * scale / mu;
            for (e, zi) in est.iter().zip(z) {
                let err = (e - proj * zi).abs();
                worst_linear = worst_linear.max(err / tol);
                linear_ok &= err <= tol;
            }
        }
    }

    // Quadratic loss: the mean of 100 averaged estimates at R = 512.
    let trials = 100;
    let r = 512;
    let mut rng = party_rng(opts.seed, "zo-quadratic", &[]);
    let m: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let amat: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| (0..d).map(|k| m[k][i] * m[k][j]).sum::<f64>() / d as f64 + if i == j { 1.0 } else { 0.0 })
                .collect()
        })
        .collect();
    let bvec: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let w: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let loss = |x: &[f64]| {
        let ax: Vec<f64> = amat.iter().map(|row| dot(row, x)).collect();
        0.5 * dot(x, &ax) + dot(&bvec, x)
    };
    let grad: Vec<f64> = amat.iter().zip(&bvec).map(|(row, bi)| dot(row, &w) + bi).collect();
    let cfg = ZoConfig { r, zo_mu: 1e-3, average: true };
    let estimates = (0..trials as u64)
        .into_par_iter()
        .map(|t| {
            let zs = sample_perturbations(d, r, &SharedRandomness::from_u64(opts.seed.wrapping_add(t)), 1);
            zo_estimate(loss, &w, &zs, &cfg)
        })
        .collect::<byzagg_core::Result<Vec<_>>>()?;
    let mean: Vec<f64> = (0..d).map(|k| estimates.iter().map(|e| e[k]).sum::<f64>() / trials as f64).collect();
    let err: Vec<f64> = mean.iter().zip(&grad).map(|(x, g)| x - g).collect();
    let rel = (dot(&err, &err) / dot(&grad, &grad)).sqrt();
    Ok((
        linear_ok && rel < 0.1,
        format!("linear: worst error {worst_linear:.2} of the rounding bound; quadratic: relative error {rel:.4} (d={d}, R={r}, {trials} trials)"),
    ))
}

fn files_identical(a: &Path, b: &Path) -> Result<Vec<String>> {
    let mut names: Vec<String> = std::fs::read_dir(a)
        .map_err(io_err(a))?
        .filter_map(|e| e.ok())
        .map(|e| e.file_name().to_string_lossy().into_owned())
        .filter(|n| n.ends_with(".csv"))
        .collect();
    names.sort();
    let mut differing = Vec::new();
    for name in &names {
        let x = std::fs::read(a.join(name)).map_err(io_err(a.join(name)))?;
        let y = std::fs::read(b.join(name)).unwrap_or_default();
        if x != y {
            differing.push(name.clone());
        }
    }
    if names.is_empty() {
        differing.push("no CSV files written".into());
    }
    Ok(differing)
}

/// Runs a reduced training profile twice into separate directories, with the
/// thread pool free to schedule runs differently, and compares the CSVs.
fn determinism(opts: &SelftestOptions) -> Result<(bool, String)> {
    let seeds = vec![opts.seed, opts.seed.wrapping_add(1)];
    let epochs = opts.scale(15, 5);
    let root = opts.out_dir.join("determinism");
    let mut files = 0;
    let mut differing = Vec::new();
    for attack in [AttackKind::Alie, AttackKind::LabelFlip] {
        let mut cfg = trend_config(attack, seeds.clone(), epochs);
        cfg.name = format!("determinism_{}", attack_label(attack));
        let mut dirs = Vec::new();
        for pass in ["a", "b"] {
            let dir = root.join(pass);
            let out = run_experiment(&cfg, &RunOptions::default())?;
            files += report::write_outputs(&dir, &out)?.len();
            dirs.push(dir);
        }
        differing.extend(files_identical(&dirs[0], &dirs[1])?);
    }
    differing.sort();
    differing.dedup();
    Ok((
        differing.is_empty(),
        format!("{} CSV files written per pass, {} differ", files / 2, differing.len()),
    ))
}
