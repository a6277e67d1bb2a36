//! Reed-Solomon decoding checked against a Berlekamp-Welch decoder and an
//! exhaustive search, both written independently of the library decoder.

use byzagg_core::error::Error;
use byzagg_core::field::{FieldElement as Fe, PrimeField};
use byzagg_core::poly::Polynomial;
use byzagg_core::rs::{rs_decode, rs_decode_constants};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Solves `A x = rhs` by Gauss-Jordan elimination; returns any solution.
fn solve(f: &PrimeField, mut a: Vec<Vec<Fe>>, mut rhs: Vec<Fe>) -> Option<Vec<Fe>> {
    let (rows, cols) = (a.len(), a[0].len());
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..cols {
        let Some(p) = (r..rows).find(|&i| !a[i][c].is_zero()) else { continue };
        a.swap(r, p);
        rhs.swap(r, p);
        let inv = f.inv(a[r][c]).unwrap();
        for v in a[r].iter_mut() {
            *v = f.mul(*v, inv);
        }
        rhs[r] = f.mul(rhs[r], inv);
        for i in 0..rows {
            if i != r && !a[i][c].is_zero() {
                let factor = a[i][c];
                #[allow(clippy::needless_range_loop)]
                for k in 0..cols {
                    a[i][k] = f.sub(a[i][k], f.mul(factor, a[r][k]));
                }
                rhs[i] = f.sub(rhs[i], f.mul(factor, rhs[r]));
            }
        }
        pivots.push(c);
        r += 1;
        if r == rows {
            break;
        }
    }
    if rhs[r..].iter().any(|v| !v.is_zero()) {
        return None;
    }
    let mut x = vec![Fe::ZERO; cols];
    for (i, &c) in pivots.iter().enumerate() {
        x[c] = rhs[i];
    }
    Some(x)
}

/// Berlekamp-Welch: find monic `E` of degree `e` and `Q` of degree `k + e`
/// with `Q(x_i) = y_i E(x_i)`, then `P = Q / E`.
fn berlekamp_welch(f: &PrimeField, pts: &[(Fe, Fe)], k: usize, e: usize) -> Option<Polynomial> {
    let unknowns = (k + e + 1) + e;
    let mut a = Vec::new();
    let mut rhs = Vec::new();
    for &(x, y) in pts {
        let mut row = Vec::with_capacity(unknowns);
        let mut xp = Fe::ONE;
        for _ in 0..=k + e {
            row.push(xp);
            xp = f.mul(xp, x);
        }
        let mut xp = Fe::ONE;
        for _ in 0..e {
            row.push(f.neg(f.mul(y, xp)));
            xp = f.mul(xp, x);
        }
        a.push(row);
        rhs.push(f.mul(y, f.pow(x, e as u64)));
    }
    let sol = solve(f, a, rhs)?;
    let q = Polynomial::new(sol[..=k + e].to_vec());
    let mut ecoef = sol[k + e + 1..].to_vec();
    ecoef.push(Fe::ONE);
    let (p, rem) = q.div_rem(f, &Polynomial::new(ecoef)).ok()?;
    if !rem.is_zero() || p.degree().is_some_and(|d| d > k) {
        return None;
    }
    let agree = pts.iter().filter(|(x, y)| p.eval(f, *x) == *y).count();
    (agree + e >= pts.len()).then_some(p)
}

fn xs(f: &PrimeField, n: usize) -> Vec<Fe> {
    (1..=n as u64).map(|i| f.elem(i)).collect()
}

fn codeword(f: &PrimeField, p: &Polynomial, n: usize) -> Vec<(Fe, Fe)> {
    xs(f, n).into_iter().map(|x| (x, p.eval(f, x))).collect()
}

fn corrupt<R: Rng>(f: &PrimeField, pts: &mut [(Fe, Fe)], count: usize, rng: &mut R) {
    for i in sample(rng, pts.len(), count) {
        let delta = loop {
            let v = f.random(rng);
            if !v.is_zero() {
                break v;
            }
        };
        pts[i].1 = f.add(pts[i].1, delta);
    }
}

#[test]
fn agrees_with_berlekamp_welch() {
    let f = PrimeField::mersenne61();
    let mut rng = ChaCha20Rng::seed_from_u64(11);
    for trial in 0..300 {
        let k = rng.random_range(0..5);
        let e = rng.random_range(0..4);
        let n = k + 2 * e + 1 + rng.random_range(0..3);
        let p = Polynomial::random_with_constant(&f, f.random(&mut rng), k, &mut rng);
        let mut pts = codeword(&f, &p, n);
        let errs = rng.random_range(0..=e + 1);
        corrupt(&f, &mut pts, errs.min(n), &mut rng);
        let gao = rs_decode(&f, &pts, k, e).ok().map(|q| q.trimmed());
        let bw = berlekamp_welch(&f, &pts, k, e).map(|q| q.trimmed());
        assert_eq!(gao, bw, "trial {trial}: k={k} e={e} n={n} errs={errs}");
        if errs <= e {
            assert_eq!(gao, Some(p.trimmed()));
        }
    }
}

/// Every polynomial of degree `<= 1` over `F_7`, compared with the received
/// word: the decoder must return one within distance `e` or fail when none
/// exists.
#[test]
fn exhaustive_small_field() {
    let f = PrimeField::new(7).unwrap();
    let (k, e, n) = (1, 1, 5);
    let xs = xs(&f, n);
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    for _ in 0..400 {
        let ys: Vec<Fe> = (0..n).map(|_| f.random(&mut rng)).collect();
        let pts: Vec<(Fe, Fe)> = xs.iter().copied().zip(ys.iter().copied()).collect();
        let mut close = Vec::new();
        for c0 in 0..7 {
            for c1 in 0..7 {
                let p = Polynomial::new(vec![f.elem(c0), f.elem(c1)]);
                let dist = pts.iter().filter(|(x, y)| p.eval(&f, *x) != *y).count();
                if dist <= e {
                    close.push(p.trimmed());
                }
            }
        }
        assert!(close.len() <= 1, "unique decoding radius violated");
        match rs_decode(&f, &pts, k, e) {
            Ok(p) => assert_eq!(vec![p.trimmed()], close),
            Err(err) => {
                assert!(close.is_empty());
                assert!(matches!(err, Error::DecodingFailure { .. }));
            }
        }
    }
}

/// Degree `2z`, `max_errors = b`, evaluated at the `n` client points, as in
/// the distance step for n = 7, z = 1, b = 2.
#[test]
fn distance_decoding_error_budget() {
    let f = PrimeField::mersenne61();
    let (n, z, b) = (7, 1, 2);
    let mut rng = ChaCha20Rng::seed_from_u64(13);
    let mut failures = 0;
    for _ in 0..1000 {
        let secret = f.random(&mut rng);
        let p = Polynomial::random_with_constant(&f, secret, 2 * z, &mut rng);
        let mut pts = codeword(&f, &p, n);
        corrupt(&f, &mut pts, b, &mut rng);
        assert_eq!(rs_decode(&f, &pts, 2 * z, b).unwrap().coeff(0), secret);

        let mut pts = codeword(&f, &p, n);
        corrupt(&f, &mut pts, b + 1, &mut rng);
        match rs_decode(&f, &pts, 2 * z, b) {
            Err(Error::DecodingFailure { .. }) => failures += 1,
            Err(other) => panic!("unexpected error {other:?}"),
            Ok(q) => assert_eq!(q.coeff(0), secret, "wrong value accepted"),
        }
    }
    assert!(failures >= 950, "only {failures} loud failures");
}

#[test]
fn batched_constants_match_single_decodes() {
    let f = PrimeField::mersenne61();
    let (n, deg, e) = (9, 2, 3);
    let xs = xs(&f, n);
    let mut rng = ChaCha20Rng::seed_from_u64(14);
    for _ in 0..50 {
        let width = 12;
        let polys: Vec<Polynomial> = (0..width)
            .map(|_| Polynomial::random_with_constant(&f, f.random(&mut rng), deg, &mut rng))
            .collect();
        let mut rows: Vec<Vec<Fe>> = xs.iter().map(|&x| polys.iter().map(|p| p.eval(&f, x)).collect()).collect();
        // A fixed set of bad points plus scattered extra corruption.
        let count = rng.random_range(0..=e);
        let bad = sample(&mut rng, n, count);
        for p in bad.iter() {
            #[allow(clippy::needless_range_loop)]
            for c in 0..width {
                if rng.random_bool(0.7) {
                    rows[p][c] = f.random(&mut rng);
                }
            }
        }
        let batched = rs_decode_constants(&f, &xs, &rows, deg, e);
        let single: Result<Vec<Fe>, _> = (0..width)
            .map(|c| {
                let pts: Vec<_> = xs.iter().copied().zip(rows.iter().map(|r| r[c])).collect();
                rs_decode(&f, &pts, deg, e).map(|p| p.coeff(0))
            })
            .collect();
        assert_eq!(batched, single);
        assert_eq!(batched.unwrap(), polys.iter().map(|p| p.coeff(0)).collect::<Vec<_>>());
    }
}
