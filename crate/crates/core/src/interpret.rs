//! Semantic Accuracy, Robustness, and explanation reports over trained item
//! rows whose coordinates are knowledge-graph features.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;

use crate::bpr::{self, BprHyper};
use crate::error::{Error, Result};
use crate::fm::{init_kahfm, FmParams};
use crate::ingest::PrefixTable;
use crate::knn::NeighborIndex;
use crate::model::{rank_of, top_k, FeatureRow, FeatureSet};
use crate::profiles::ProfileMatrix;

/// Original retained feature ids `F^i` of every item, sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemGroundTruth {
    sets: Vec<Vec<usize>>,
}

impl ItemGroundTruth {
    pub fn new(mut sets: Vec<Vec<usize>>) -> Self {
        for s in &mut sets {
            s.sort_unstable();
            s.dedup();
        }
        ItemGroundTruth { sets }
    }

    /// Features with a nonzero value in each item's row.
    pub fn from_profiles(profiles: &ProfileMatrix) -> Self {
        let sets = profiles
            .item_rows()
            .iter()
            .map(|r| r.iter().map(|(f, _)| f).collect())
            .collect();
        ItemGroundTruth { sets }
    }

    pub fn num_items(&self) -> usize {
        self.sets.len()
    }

    pub fn features(&self, item: usize) -> &[usize] {
        &self.sets[item]
    }

    pub fn m(&self, item: usize) -> usize {
        self.sets[item].len()
    }

    /// Items with at least one original feature.
    pub fn described_items(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.sets.len()).filter(|&i| !self.sets[i].is_empty())
    }

    /// F.A.: mean `M_i` over described items.
    pub fn feature_average(&self) -> f64 {
        let (count, total) = self
            .described_items()
            .fold((0usize, 0usize), |(c, t), i| (c + 1, t + self.m(i)));
        if count == 0 {
            0.0
        } else {
            total as f64 / count as f64
        }
    }
}

/// How many top coordinates an item is judged on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SaMode {
    /// `n · M_i`, denominator `M_i`.
    PerItem,
    /// `n · c`, denominator `min(M_i, c)`.
    Fixed(usize),
}

impl SaMode {
    fn top_size(self, m: usize, n: usize) -> usize {
        match self {
            SaMode::PerItem => n * m,
            SaMode::Fixed(c) => n * c,
        }
    }

    fn denominator(self, m: usize) -> usize {
        match self {
            SaMode::PerItem => m,
            SaMode::Fixed(c) => m.min(c),
        }
    }
}

impl FromStr for SaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "per-item" {
            return Ok(SaMode::PerItem);
        }
        match s.strip_prefix("fixed:").map(str::parse::<usize>) {
            Some(Ok(c)) if c > 0 => Ok(SaMode::Fixed(c)),
            _ => Err(Error::Config(format!(
                "SA mode must be `per-item` or `fixed:K` with K > 0, got `{s}`"
            ))),
        }
    }
}

impl fmt::Display for SaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SaMode::PerItem => f.write_str("per-item"),
            SaMode::Fixed(c) => write!(f, "fixed:{c}"),
        }
    }
}

fn check_rows<R: FeatureRow>(rows: &[R], truth: &ItemGroundTruth, n: usize) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::InvalidArgument("empty catalog".into()));
    }
    if rows.len() != truth.num_items() {
        return Err(Error::DimensionMismatch {
            left: rows.len(),
            right: truth.num_items(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidArgument("multiplier n must be at least 1".into()));
    }
    if truth.described_items().next().is_none() {
        return Err(Error::InvalidArgument("no item has retained features".into()));
    }
    Ok(())
}

/// Per-item share of original features found in the top coordinates, or
/// `None` for items without features.
pub fn item_accuracy<R: FeatureRow + ?Sized>(row: &R, original: &[usize], n: usize, mode: SaMode) -> Option<f64> {
    let m = original.len();
    if m == 0 {
        return None;
    }
    let top = top_k(row, mode.top_size(m, n));
    let found = top.iter().filter(|(f, _)| original.binary_search(f).is_ok()).count();
    let den = mode.denominator(m);
    Some(found.min(den) as f64 / den as f64)
}

/// SA@nM averaged over items with at least one original feature.
pub fn semantic_accuracy<R: FeatureRow + Sync>(
    rows: &[R],
    truth: &ItemGroundTruth,
    n: usize,
    mode: SaMode,
) -> Result<f64> {
    check_rows(rows, truth, n)?;
    let per_item: Vec<Option<f64>> = rows
        .par_iter()
        .enumerate()
        .map(|(i, r)| item_accuracy(r, truth.features(i), n, mode))
        .collect();
    Ok(mean(per_item.into_iter().flatten()))
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (count, sum) = values.fold((0usize, 0.0), |(c, s), v| (c + 1, s + v));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// SA@nM for `n = 1..=max_n`.
pub fn sa_curve<R: FeatureRow + Sync>(
    rows: &[R],
    truth: &ItemGroundTruth,
    max_n: usize,
    mode: SaMode,
) -> Result<Vec<f64>> {
    (1..=max_n).map(|n| semantic_accuracy(rows, truth, n, mode)).collect()
}

/// The original feature with the largest trained value, ties to the lower id.
pub fn find_fmax<R: FeatureRow + ?Sized>(row: &R, original: &[usize]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &f in original {
        let v = row.value(f);
        match best {
            Some((bf, bv)) if bv > v || (bv == v && bf < f) => {}
            _ => best = Some((f, v)),
        }
    }
    best.map(|(f, _)| f)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RobMode {
    /// One retrain with every item's strongest feature removed.
    Batch,
    /// One retrain per item, each removing only that item's feature.
    PerItem,
}

impl FromStr for RobMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch" => Ok(RobMode::Batch),
            "per-item" => Ok(RobMode::PerItem),
            _ => Err(Error::Config(format!(
                "robustness mode must be `batch` or `per-item`, got `{s}`"
            ))),
        }
    }
}

impl fmt::Display for RobMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RobMode::Batch => "batch",
            RobMode::PerItem => "per-item",
        })
    }
}

/// Outcome of the removal-and-retrain protocol for every item.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessOutcome {
    pub mode: RobMode,
    /// Removed feature, `None` for items without features.
    pub fmax: Vec<Option<usize>>,
    /// 1-based rank of the removed feature in the retrained row.
    pub rank: Vec<Option<usize>>,
    /// `M_i` captured before removal.
    pub m: Vec<usize>,
}

impl RobustnessOutcome {
    /// Whether item `i`'s removed feature came back into its top coordinates.
    pub fn success(&self, item: usize, n: usize, mode: SaMode) -> Option<bool> {
        self.rank[item].map(|r| r <= mode.top_size(self.m[item], n))
    }

    /// n-Rob@nM over items that had a feature to remove.
    pub fn rob_at(&self, n: usize, mode: SaMode) -> f64 {
        let (count, ok) = (0..self.rank.len())
            .filter_map(|i| self.success(i, n, mode))
            .fold((0usize, 0usize), |(c, s), hit| (c + 1, s + hit as usize));
        if count == 0 {
            0.0
        } else {
            ok as f64 / count as f64
        }
    }

    pub fn curve(&self, max_n: usize, mode: SaMode) -> Vec<f64> {
        (1..=max_n).map(|n| self.rob_at(n, mode)).collect()
    }
}

/// Removes each item's strongest original feature from the feature-aligned
/// initialization, retrains, and records where the feature landed.
///
/// `trained` is the completed base run; `truth` comes from before any
/// removal. Retraining uses `hyper` unchanged, seed included.
pub fn robustness_protocol(
    train: &crate::model::Dataset,
    profiles: &ProfileMatrix,
    truth: &ItemGroundTruth,
    trained: &FmParams,
    hyper: &BprHyper,
    mode: RobMode,
) -> Result<RobustnessOutcome> {
    if trained.num_items() != truth.num_items() || profiles.num_items() != truth.num_items() {
        return Err(Error::DimensionMismatch {
            left: trained.num_items(),
            right: truth.num_items(),
        });
    }
    let fmax: Vec<Option<usize>> = (0..truth.num_items())
        .map(|i| find_fmax(trained.item_row(i), truth.features(i)))
        .collect();
    let base = init_kahfm(profiles);
    let rank = match mode {
        RobMode::Batch => {
            let mut params = base;
            for (i, f) in fmax.iter().enumerate() {
                if let Some(f) = *f {
                    params.item_row_mut(i)[f] = 0.0;
                }
            }
            bpr::train(&mut params, train, hyper)?;
            fmax.iter()
                .enumerate()
                .map(|(i, f)| f.map(|f| rank_of(params.item_row(i), f)))
                .collect()
        }
        RobMode::PerItem => fmax
            .par_iter()
            .enumerate()
            .map(|(i, f)| -> Result<Option<usize>> {
                let Some(f) = *f else { return Ok(None) };
                let mut params = base.clone();
                params.item_row_mut(i)[f] = 0.0;
                bpr::train(&mut params, train, hyper)?;
                Ok(Some(rank_of(params.item_row(i), f)))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(RobustnessOutcome {
        mode,
        fmax,
        rank,
        m: (0..truth.num_items()).map(|i| truth.m(i)).collect(),
    })
}

/// One line of an item explanation.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplainRow {
    pub feature: usize,
    pub trained: f64,
    pub tfidf: f64,
    pub predicate: String,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ItemExplanation {
    pub item: String,
    pub rows: Vec<ExplainRow>,
}

fn labels(features: &FeatureSet, prefixes: &PrefixTable, f: usize) -> (String, String) {
    let feat = features.get(f).expect("feature id outside the feature table");
    (prefixes.compact(&feat.predicate), prefixes.compact(&feat.object))
}

/// Top-`k` features of a trained item row next to the item's TF-IDF weights.
pub fn explain_item(
    item: usize,
    params: &FmParams,
    profiles: &ProfileMatrix,
    features: &FeatureSet,
    item_names: &crate::model::IdMap,
    prefixes: &PrefixTable,
    k: usize,
) -> Result<ItemExplanation> {
    if item >= params.num_items() || item >= profiles.num_items() {
        return Err(Error::Unknown {
            kind: "item",
            id: item.to_string(),
        });
    }
    if params.k() != features.len() || profiles.dim() != features.len() {
        return Err(Error::DimensionMismatch {
            left: params.k(),
            right: features.len(),
        });
    }
    let original = profiles.item_row(item);
    let rows = top_k(params.item_row(item), k)
        .into_iter()
        .map(|(f, v)| {
            let (predicate, object) = labels(features, prefixes, f);
            ExplainRow {
                feature: f,
                trained: v,
                tfidf: original.value(f),
                predicate,
                object,
            }
        })
        .collect();
    Ok(ItemExplanation {
        item: item_names.external(item).unwrap_or_default().to_owned(),
        rows,
    })
}

fn aligned(header: &[&str], body: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let mut s = String::new();
    let mut line = |cells: &mut dyn Iterator<Item = &str>| {
        let parts: Vec<String> = cells.zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        let _ = writeln!(s, "{}", parts.join("  ").trim_end());
    };
    line(&mut header.iter().copied());
    for row in body {
        line(&mut row.iter().map(String::as_str));
    }
    s
}

impl ItemExplanation {
    const HEADER: [&'static str; 4] = ["kaHFM", "TF-IDF", "Predicate", "Object"];

    fn cells(&self) -> Vec<Vec<String>> {
        self.rows
            .iter()
            .map(|r| {
                vec![
                    format!("{:.4}", r.trained),
                    format!("{:.4}", r.tfidf),
                    r.predicate.clone(),
                    r.object.clone(),
                ]
            })
            .collect()
    }

    pub fn to_text(&self) -> String {
        format!("item {}\n{}", self.item, aligned(&Self::HEADER, &self.cells()))
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("kaHFM\tTF-IDF\tPredicate\tObject\n");
        for r in &self.rows {
            let _ = writeln!(s, "{:?}\t{:?}\t{}\t{}", r.trained, r.tfidf, r.predicate, r.object);
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SharedFeature {
    pub feature: usize,
    /// `Σ_j v_i[f] · v_j[f]` over contributing neighbors `j`.
    pub weight: f64,
    pub predicate: String,
    pub object: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecommendationExplanation {
    pub user: usize,
    pub item: usize,
    pub score: f64,
    /// Neighbors of the item the user already has, with their similarity.
    pub neighbors: Vec<(usize, f64)>,
    pub shared: Vec<SharedFeature>,
}

/// Why `item` was scored for `user`: the neighbors in the user's history that
/// feed the score numerator, and the features through which the item's
/// trained row agrees with theirs, strongest first.
#[allow(clippy::too_many_arguments)]
pub fn explain_recommendation(
    user: usize,
    item: usize,
    history: &[usize],
    index: &NeighborIndex,
    params: &FmParams,
    features: &FeatureSet,
    prefixes: &PrefixTable,
    k: usize,
) -> Result<RecommendationExplanation> {
    if item >= index.num_items() {
        return Err(Error::Unknown {
            kind: "item",
            id: item.to_string(),
        });
    }
    if history.binary_search(&item).is_ok() {
        return Err(Error::InvalidArgument(format!(
            "item {item} is in the user's training history, not a recommendation"
        )));
    }
    let neighbors: Vec<(usize, f64)> = index
        .neighbors(item)
        .iter()
        .copied()
        .filter(|(j, _)| history.binary_search(j).is_ok())
        .collect();
    let vi = params.item_row(item);
    let mut weights = vec![0.0; params.k()];
    for &(j, _) in &neighbors {
        for (w, (a, b)) in weights.iter_mut().zip(vi.iter().zip(params.item_row(j))) {
            *w += a * b;
        }
    }
    let candidates: Vec<(usize, f64)> = weights.into_iter().enumerate().filter(|&(_, w)| w != 0.0).collect();
    let shared = top_k(&crate::model::SparseVector::from_pairs(params.k(), candidates)?, k)
        .into_iter()
        .filter(|&(_, w)| w != 0.0)
        .map(|(f, weight)| {
            let (predicate, object) = labels(features, prefixes, f);
            SharedFeature {
                feature: f,
                weight,
                predicate,
                object,
            }
        })
        .collect();
    Ok(RecommendationExplanation {
        user,
        item,
        score: index.score(item, history),
        neighbors,
        shared,
    })
}

impl RecommendationExplanation {
    pub fn to_text(&self, items: &crate::model::IdMap, users: &crate::model::IdMap) -> String {
        let name = |m: &crate::model::IdMap, i: usize| m.external(i).unwrap_or_default().to_owned();
        let mut s = format!(
            "user {} item {} score {:.6}\n",
            name(users, self.user),
            name(items, self.item),
            self.score
        );
        if self.neighbors.is_empty() {
            s.push_str("no neighbor of the item is in the user's history\n");
            return s;
        }
        s.push_str("\nneighbors in history\n");
        let body: Vec<Vec<String>> = self
            .neighbors
            .iter()
            .map(|&(j, sim)| vec![name(items, j), format!("{sim:.4}")])
            .collect();
        s.push_str(&aligned(&["Item", "Similarity"], &body));
        s.push_str("\nshared features\n");
        let body: Vec<Vec<String>> = self
            .shared
            .iter()
            .map(|f| vec![format!("{:.4}", f.weight), f.predicate.clone(), f.object.clone()])
            .collect();
        s.push_str(&aligned(&["Weight", "Predicate", "Object"], &body));
        s
    }
}
