//! Plaintext nearest-neighbour mixing, Krum, Multi-Krum and trimmed mean.
//!
//! Everything here works on client ids carried by the [`DistanceMatrix`];
//! ties are always broken by the smaller id. The same selection code runs on
//! exact integer distances decoded by the federator and on plaintext vectors.

use std::cmp::Ordering;
use std::fmt::Debug;
use std::ops::Add;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::party::ClientId;

/// Scalar type of a gradient coordinate.
pub trait Coordinate: Copy + Default + Add<Output = Self> + Debug {
    type Dist: Copy + Default + PartialOrd + Add<Output = Self::Dist> + Debug;

    fn sq_diff(a: Self, b: Self) -> Self::Dist;
}

impl Coordinate for i64 {
    type Dist = i128;

    fn sq_diff(a: i64, b: i64) -> i128 {
        let d = a as i128 - b as i128;
        d * d
    }
}

impl Coordinate for f64 {
    type Dist = f64;

    fn sq_diff(a: f64, b: f64) -> f64 {
        (a - b) * (a - b)
    }
}

fn cmp_dist<D: PartialOrd>(a: &D, b: &D) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

/// Squared Euclidean distance.
pub fn squared_distance<C: Coordinate>(a: &[C], b: &[C]) -> C::Dist {
    a.iter()
        .zip(b)
        .fold(C::Dist::default(), |acc, (&x, &y)| acc + C::sq_diff(x, y))
}

/// Symmetric matrix of pairwise distances with the clients it refers to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix<D> {
    ids: Vec<ClientId>,
    data: Vec<D>,
}

impl<D: Copy + Default + PartialOrd + Add<Output = D> + Debug> DistanceMatrix<D> {
    /// Builds the matrix from the strict upper triangle, `f(a, b)` for
    /// positions `a < b`.
    pub fn from_fn(ids: Vec<ClientId>, mut f: impl FnMut(usize, usize) -> D) -> Self {
        let n = ids.len();
        let mut data = vec![D::default(); n * n];
        for a in 0..n {
            for b in a + 1..n {
                let v = f(a, b);
                data[a * n + b] = v;
                data[b * n + a] = v;
            }
        }
        Self { ids, data }
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn ids(&self) -> &[ClientId] {
        &self.ids
    }

    /// Distance between positions `a` and `b`.
    pub fn get(&self, a: usize, b: usize) -> D {
        self.data[a * self.n() + b]
    }

    pub fn position(&self, id: ClientId) -> Option<usize> {
        self.ids.iter().position(|&x| x == id)
    }

    /// Distance between clients `j` and `l`.
    pub fn between(&self, j: ClientId, l: ClientId) -> D {
        self.get(self.position(j).expect("unknown client"), self.position(l).expect("unknown client"))
    }

    pub fn map<E>(&self, f: impl Fn(D) -> E) -> DistanceMatrix<E> {
        DistanceMatrix {
            ids: self.ids.clone(),
            data: self.data.iter().map(|&d| f(d)).collect(),
        }
    }
}

/// Pairwise distances of vectors belonging to clients `1..=n`.
pub fn pairwise_distances<C: Coordinate>(vectors: &[Vec<C>]) -> DistanceMatrix<C::Dist> {
    let ids = (1..=vectors.len()).collect();
    pairwise_distances_with_ids(ids, vectors)
}

pub fn pairwise_distances_with_ids<C: Coordinate>(ids: Vec<ClientId>, vectors: &[Vec<C>]) -> DistanceMatrix<C::Dist> {
    assert_eq!(ids.len(), vectors.len());
    DistanceMatrix::from_fn(ids, |a, b| squared_distance(&vectors[a], &vectors[b]))
}

/// `N_j` for every client, nearest first, as positions into the matrix.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeighborSets {
    ids: Vec<ClientId>,
    sets: Vec<Vec<usize>>,
}

impl NeighborSets {
    /// Neighbour positions of position `j`.
    pub fn positions(&self, j: usize) -> &[usize] {
        &self.sets[j]
    }

    /// Neighbour ids of client `id`.
    pub fn of(&self, id: ClientId) -> Vec<ClientId> {
        let j = self.ids.iter().position(|&x| x == id).expect("unknown client");
        self.sets[j].iter().map(|&p| self.ids[p]).collect()
    }

    pub fn ids(&self) -> &[ClientId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }
}

/// The `n - b` nearest clients of each client, itself first, then by
/// `(distance, id)`.
pub fn neighbor_sets<D>(dist: &DistanceMatrix<D>, b: usize) -> Result<NeighborSets>
where
    D: Copy + Default + PartialOrd + Add<Output = D> + Debug,
{
    let n = dist.n();
    if n <= b {
        return Err(Error::ConfigInvalid(format!("nearest-neighbour mixing needs n > b, got n={n}, b={b}")));
    }
    let sets = (0..n)
        .map(|j| {
            let mut others: Vec<usize> = (0..n).filter(|&l| l != j).collect();
            others.sort_by(|&a, &c| cmp_dist(&dist.get(j, a), &dist.get(j, c)).then(dist.ids[a].cmp(&dist.ids[c])));
            std::iter::once(j).chain(others).take(n - b).collect()
        })
        .collect();
    Ok(NeighborSets {
        ids: dist.ids.clone(),
        sets,
    })
}

/// Sum of the vectors at the given positions.
pub fn sum_of<C: Coordinate>(vectors: &[Vec<C>], positions: &[usize]) -> Vec<C> {
    let d = vectors.first().map_or(0, Vec::len);
    let mut acc = vec![C::default(); d];
    for &p in positions {
        for (a, &v) in acc.iter_mut().zip(&vectors[p]) {
            *a = *a + v;
        }
    }
    acc
}

/// Replaces every vector by the unnormalized sum of its `n - b` nearest
/// neighbours.
pub fn nnm_mix<C: Coordinate>(vectors: &[Vec<C>], b: usize) -> Result<Vec<Vec<C>>> {
    let sets = neighbor_sets(&pairwise_distances(vectors), b)?;
    Ok((0..vectors.len()).map(|j| sum_of(vectors, sets.positions(j))).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult<D> {
    /// Selected client ids in selection order.
    pub selected: Vec<ClientId>,
    /// Scores of the first selection round, per position.
    pub scores: Vec<D>,
}

fn score<D>(dist: &DistanceMatrix<D>, j: usize, candidates: &[usize], closest: usize) -> D
where
    D: Copy + Default + PartialOrd + Add<Output = D> + Debug,
{
    let mut row: Vec<D> = candidates.iter().filter(|&&l| l != j).map(|&l| dist.get(j, l)).collect();
    row.sort_by(cmp_dist);
    row.into_iter().take(closest).fold(D::default(), |a, v| a + v)
}

fn argmin<D: PartialOrd + Copy>(ids: &[ClientId], candidates: &[usize], scores: &[D]) -> usize {
    let mut best = 0;
    for k in 1..candidates.len() {
        let ord = cmp_dist(&scores[k], &scores[best]);
        if ord == Ordering::Less || (ord == Ordering::Equal && ids[candidates[k]] < ids[candidates[best]]) {
            best = k;
        }
    }
    candidates[best]
}

/// Client with the smallest sum of distances to its `n - b - 2` closest
/// peers.
pub fn krum_select<D>(dist: &DistanceMatrix<D>, b: usize) -> Result<SelectionResult<D>>
where
    D: Copy + Default + PartialOrd + Add<Output = D> + Debug,
{
    let n = dist.n();
    if n < b + 3 {
        return Err(Error::ConfigInvalid(format!("Krum needs n >= b + 3, got n={n}, b={b}")));
    }
    let all: Vec<usize> = (0..n).collect();
    let scores: Vec<D> = all.iter().map(|&j| score(dist, j, &all, n - b - 2)).collect();
    let pick = argmin(&dist.ids, &all, &scores);
    Ok(SelectionResult {
        selected: vec![dist.ids[pick]],
        scores,
    })
}

/// Iterated Krum selecting `n - 2b - 3` clients; scores are recomputed on the
/// remaining candidates with `n - b - |C*| - 2` closest peers.
pub fn multikrum_select<D>(dist: &DistanceMatrix<D>, b: usize) -> Result<SelectionResult<D>>
where
    D: Copy + Default + PartialOrd + Add<Output = D> + Debug,
{
    let n = dist.n();
    if n < 2 * b + 4 {
        return Err(Error::ConfigInvalid(format!("Multi-Krum needs n >= 2b + 4, got n={n}, b={b}")));
    }
    let mut candidates: Vec<usize> = (0..n).collect();
    let mut selected = Vec::new();
    let mut first_scores = Vec::new();
    for k in 0..n - 2 * b - 3 {
        let closest = n - b - k - 2;
        let scores: Vec<D> = candidates.iter().map(|&j| score(dist, j, &candidates, closest)).collect();
        if k == 0 {
            first_scores = scores.clone();
        }
        let pick = argmin(&dist.ids, &candidates, &scores);
        selected.push(dist.ids[pick]);
        candidates.retain(|&c| c != pick);
    }
    Ok(SelectionResult {
        selected,
        scores: first_scores,
    })
}

/// Coordinate-wise mean after dropping the `b` smallest and `b` largest
/// values.
pub fn trimmed_mean(vectors: &[Vec<f64>], b: usize) -> Result<Vec<f64>> {
    let n = vectors.len();
    if n <= 2 * b {
        return Err(Error::ConfigInvalid(format!("trimmed mean needs n > 2b, got n={n}, b={b}")));
    }
    let d = vectors[0].len();
    Ok((0..d)
        .map(|u| {
            let mut col: Vec<f64> = vectors.iter().map(|v| v[u]).collect();
            col.sort_by(f64::total_cmp);
            col[b..n - b].iter().sum::<f64>() / (n - 2 * b) as f64
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Selection {
    Krum,
    MultiKrum,
}

impl Selection {
    pub fn select<D>(self, dist: &DistanceMatrix<D>, b: usize) -> Result<SelectionResult<D>>
    where
        D: Copy + Default + PartialOrd + Add<Output = D> + Debug,
    {
        match self {
            Selection::Krum => krum_select(dist, b),
            Selection::MultiKrum => multikrum_select(dist, b),
        }
    }

    /// Smallest admissible number of clients for `b` Byzantine ones.
    pub fn min_clients(self, b: usize) -> usize {
        match self {
            Selection::Krum => b + 3,
            Selection::MultiKrum => 2 * b + 4,
        }
    }
}

/// A selection rule, optionally preceded by nearest-neighbour mixing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RobustRule {
    pub selection: Selection,
    pub nnm: bool,
}

/// Unnormalized output of a [`RobustRule`]: the sum of the selected
/// (mixed) vectors and the factor that turns it into the aggregate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RuleOutput<C> {
    pub sum: Vec<C>,
    pub selected: Vec<ClientId>,
    pub normalizer: usize,
}

impl RobustRule {
    pub const fn new(selection: Selection, nnm: bool) -> Self {
        Self { selection, nnm }
    }

    /// Runs the rule on the vectors of clients `ids`.
    pub fn apply_with_ids<C: Coordinate>(&self, ids: &[ClientId], vectors: &[Vec<C>], b: usize) -> Result<RuleOutput<C>> {
        let (inputs, mix_size) = if self.nnm {
            let sets = neighbor_sets(&pairwise_distances_with_ids(ids.to_vec(), vectors), b)?;
            let mixed = (0..vectors.len()).map(|j| sum_of(vectors, sets.positions(j))).collect();
            (mixed, ids.len() - b)
        } else {
            (vectors.to_vec(), 1)
        };
        let dist = pairwise_distances_with_ids(ids.to_vec(), &inputs);
        let sel = self.selection.select(&dist, b)?;
        let positions: Vec<usize> = sel.selected.iter().map(|&id| dist.position(id).unwrap()).collect();
        Ok(RuleOutput {
            sum: sum_of(&inputs, &positions),
            normalizer: sel.selected.len() * mix_size,
            selected: sel.selected,
        })
    }

    pub fn apply<C: Coordinate>(&self, vectors: &[Vec<C>], b: usize) -> Result<RuleOutput<C>> {
        let ids: Vec<ClientId> = (1..=vectors.len()).collect();
        self.apply_with_ids(&ids, vectors, b)
    }

    /// Normalized real aggregate.
    pub fn aggregate(&self, vectors: &[Vec<f64>], b: usize) -> Result<Vec<f64>> {
        let out = self.apply(vectors, b)?;
        Ok(out.sum.iter().map(|v| v / out.normalizer as f64).collect())
    }
}

/// Coordinate-wise mean, accumulated as offsets from the first vector so that
/// identical inputs give their common value exactly.
pub fn mean(vectors: &[&[f64]]) -> Vec<f64> {
    let Some(first) = vectors.first() else {
        return Vec::new();
    };
    let mut acc = vec![0.0; first.len()];
    for v in vectors {
        for ((a, x), f) in acc.iter_mut().zip(v.iter()).zip(first.iter()) {
            *a += x - f;
        }
    }
    let n = vectors.len() as f64;
    first.iter().zip(&acc).map(|(f, a)| f + a / n).collect()
}

/// Both sides of the `(b, kappa)`-robustness inequality
/// `||R - mean_H||^2 <= kappa / |H| * sum_{i in H} ||g_i - mean_H||^2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RobustnessAudit {
    pub lhs: f64,
    pub rhs: f64,
}

impl RobustnessAudit {
    pub fn holds(&self) -> bool {
        self.lhs <= self.rhs
    }
}

/// Evaluates the robustness inequality for an aggregate `output` given the
/// honest positions.
pub fn robustness_check(output: &[f64], vectors: &[Vec<f64>], honest: &[usize], kappa: f64) -> RobustnessAudit {
    let hv: Vec<&[f64]> = honest.iter().map(|&i| vectors[i].as_slice()).collect();
    let gbar = mean(&hv);
    let lhs = squared_distance(output, &gbar);
    let spread: f64 = hv.iter().map(|v| squared_distance(v, &gbar)).sum();
    RobustnessAudit {
        lhs,
        rhs: kappa / honest.len() as f64 * spread,
    }
}

/// Robustness coefficient of NNM composed with a `(b, kappa)`-robust rule:
/// `8b / (n - b) * (kappa + 1)`.
pub fn nnm_kappa(n: usize, b: usize, kappa: f64) -> f64 {
    8.0 * b as f64 / (n - b) as f64 * (kappa + 1.0)
}

/// A commonly used robustness coefficient for Krum, `6 (1 + b / (n - 2b))`.
/// It is a reporting default only.
pub fn default_krum_kappa(n: usize, b: usize) -> f64 {
    6.0 * (1.0 + b as f64 / (n - 2 * b) as f64)
}
