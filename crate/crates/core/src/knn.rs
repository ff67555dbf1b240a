//! Exact cosine Item-kNN over feature-aligned item vectors.
//!
//! A candidate item `i` is scored for user `u` by the share of its neighbor
//! similarity mass that falls on items the user already has:
//! `Σ_{j ∈ N^i ∩ I^u} cs(i,j) / Σ_{j ∈ N^i} cs(i,j)`.

use std::cmp::Ordering;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{dot, FeatureRow};

/// Denominators below this magnitude score 0.
pub const MIN_DENOMINATOR: f64 = 1e-12;

pub const DEFAULT_NEIGHBORS: usize = 40;

/// `a·b / (‖a‖‖b‖)`, or 0 when either norm is 0. Clamped to `[-1, 1]`.
///
/// Panics if the dimensions differ.
pub fn cosine<A: FeatureRow + ?Sized, B: FeatureRow + ?Sized>(a: &A, b: &B) -> f64 {
    let na = a.norm();
    let nb = b.norm();
    cosine_with_norms(a, b, na, nb)
}

fn cosine_with_norms<A: FeatureRow + ?Sized, B: FeatureRow + ?Sized>(a: &A, b: &B, na: f64, nb: f64) -> f64 {
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let d = dot(a, b).expect("cosine over rows of different dimension");
    (d / (na * nb)).clamp(-1.0, 1.0)
}

/// Similarity order: descending similarity, ties by ascending item id.
fn by_similarity(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

/// For each item, its `k` most similar other items.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborIndex {
    k: usize,
    lists: Vec<Vec<(usize, f64)>>,
}

impl NeighborIndex {
    /// Cosine neighbors of each row. Lists are truncated to `rows.len() - 1`
    /// when the catalog is smaller than `k + 1`.
    pub fn cosine<R: FeatureRow + Sync>(rows: &[R], k: usize) -> Result<Self> {
        let norms: Vec<f64> = rows.par_iter().map(|r| r.norm()).collect();
        if let Some(first) = rows.first() {
            if let Some(bad) = rows.iter().find(|r| r.dim() != first.dim()) {
                return Err(Error::DimensionMismatch {
                    left: bad.dim(),
                    right: first.dim(),
                });
            }
        }
        Self::from_similarity(rows.len(), k, |i, j| {
            cosine_with_norms(&rows[i], &rows[j], norms[i], norms[j])
        })
    }

    /// Builds neighbor lists from any pairwise similarity function.
    pub fn from_similarity(num_items: usize, k: usize, sim: impl Fn(usize, usize) -> f64 + Sync) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("neighborhood size must be at least 1".into()));
        }
        let lists = (0..num_items)
            .into_par_iter()
            .map(|i| {
                let candidates = (0..num_items).filter(|&j| j != i).map(|j| (j, sim(i, j))).collect();
                top_by_similarity(candidates, k)
            })
            .collect();
        Ok(NeighborIndex { k, lists })
    }

    /// Builds neighbor lists from precomputed similarity rows; entries for
    /// the item itself are ignored.
    pub fn from_lists(k: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("neighborhood size must be at least 1".into()));
        }
        let lists = rows
            .into_par_iter()
            .enumerate()
            .map(|(i, row)| top_by_similarity(row.into_iter().filter(|&(j, _)| j != i).collect(), k))
            .collect();
        Ok(NeighborIndex { k, lists })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_items(&self) -> usize {
        self.lists.len()
    }

    pub fn neighbors(&self, item: usize) -> &[(usize, f64)] {
        &self.lists[item]
    }

    /// Neighbor-overlap score of `item` for a user whose training items are
    /// `history` (sorted ascending).
    pub fn score(&self, item: usize, history: &[usize]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for &(j, s) in &self.lists[item] {
            den += s;
            if history.binary_search(&j).is_ok() {
                num += s;
            }
        }
        if den.abs() < MIN_DENOMINATOR {
            0.0
        } else {
            num / den
        }
    }
}

fn top_by_similarity(mut candidates: Vec<(usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k - 1, by_similarity);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(by_similarity);
    candidates
}

pub fn knn_score(index: &NeighborIndex, item: usize, history: &[usize]) -> f64 {
    index.score(item, history)
}

/// Scores every item outside `history` (sorted ascending) and keeps the best
/// `n`, score descending with ties by ascending item id.
pub fn rank_unrated(num_items: usize, history: &[usize], n: usize, score: impl Fn(usize) -> f64) -> Vec<(usize, f64)> {
    let candidates: Vec<(usize, f64)> = (0..num_items)
        .filter(|i| history.binary_search(i).is_err())
        .map(|i| (i, score(i)))
        .collect();
    if n == 0 {
        return Vec::new();
    }
    top_by_similarity(candidates, n)
}

/// Top-`n` unrated items for a user by neighbor-overlap score.
pub fn recommend_topn(index: &NeighborIndex, history: &[usize], n: usize) -> Vec<(usize, f64)> {
    rank_unrated(index.num_items(), history, n, |i| index.score(i, history))
}
