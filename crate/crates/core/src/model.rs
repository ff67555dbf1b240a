//! Shared domain types: features, index maps, interaction logs and
//! feature-indexed vectors.
//!
//! Users, items and features all live in dense `usize` index spaces. External
//! string identifiers only appear in [`IdMap`] and [`FeatureSet`].

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// A `(predicate, object)` pair attached to an item by a knowledge-graph triple.
///
/// Ordering is lexicographic on predicate, then object; this order fixes the
/// dense feature ids handed out by [`FeatureSet`].
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Feature {
    pub predicate: String,
    pub object: String,
}

impl Feature {
    pub fn new(predicate: impl Into<String>, object: impl Into<String>) -> Result<Self> {
        let predicate = predicate.into();
        let object = object.into();
        if predicate.is_empty() || object.is_empty() {
            return Err(Error::InvalidArgument(
                "feature predicate and object must be non-empty".into(),
            ));
        }
        Ok(Feature { predicate, object })
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}> {}", self.predicate, self.object)
    }
}

/// The retained feature universe `F` with stable dense ids.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureSet {
    features: Vec<Feature>,
    index: HashMap<Feature, usize>,
}

impl FeatureSet {
    /// Builds the set, assigning ids in sorted `(predicate, object)` order.
    pub fn from_features(features: impl IntoIterator<Item = Feature>) -> Self {
        let mut features: Vec<Feature> = features.into_iter().collect();
        features.sort();
        features.dedup();
        let index = features.iter().enumerate().map(|(id, f)| (f.clone(), id)).collect();
        FeatureSet { features, index }
    }

    /// Builds the set keeping the given order as the id order.
    pub fn from_ordered(features: Vec<Feature>) -> Result<Self> {
        let mut index = HashMap::with_capacity(features.len());
        for (id, f) in features.iter().enumerate() {
            if index.insert(f.clone(), id).is_some() {
                return Err(Error::InvalidArgument(format!("duplicate feature {f}")));
            }
        }
        Ok(FeatureSet { features, index })
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn id(&self, feature: &Feature) -> Option<usize> {
        self.index.get(feature).copied()
    }

    pub fn get(&self, id: usize) -> Option<&Feature> {
        self.features.get(id)
    }

    pub fn contains(&self, feature: &Feature) -> bool {
        self.index.contains_key(feature)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Feature> {
        self.features.iter()
    }
}

/// Bidirectional map between external string ids and dense ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IdMap {
    external: Vec<String>,
    dense: HashMap<String, usize>,
}

impl IdMap {
    pub fn new() -> Self {
        Self::default()
    }

    /// Returns the dense id, assigning the next free one on first sight.
    pub fn intern(&mut self, external: &str) -> usize {
        if let Some(&id) = self.dense.get(external) {
            return id;
        }
        let id = self.external.len();
        self.external.push(external.to_owned());
        self.dense.insert(external.to_owned(), id);
        id
    }

    pub fn from_external(ids: Vec<String>) -> Result<Self> {
        let mut map = IdMap::new();
        for id in &ids {
            if map.dense.contains_key(id) {
                return Err(Error::InvalidArgument(format!("duplicate external id `{id}`")));
            }
            map.intern(id);
        }
        Ok(map)
    }

    pub fn dense(&self, external: &str) -> Option<usize> {
        self.dense.get(external).copied()
    }

    pub fn external(&self, dense: usize) -> Option<&str> {
        self.external.get(dense).map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }

    pub fn externals(&self) -> &[String] {
        &self.external
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interaction {
    pub user: usize,
    pub item: usize,
    pub rating: Option<f64>,
    pub timestamp: Option<i64>,
}

/// A user-item interaction log over fixed user and item index maps.
///
/// Train and test splits share the same maps, so dense ids agree across them.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    interactions: Vec<Interaction>,
    users: Arc<IdMap>,
    items: Arc<IdMap>,
}

impl Dataset {
    pub fn new(users: Arc<IdMap>, items: Arc<IdMap>, interactions: Vec<Interaction>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(interactions.len());
        let explicit = interactions.first().map(|x| x.rating.is_some());
        for x in &interactions {
            if x.user >= users.len() || x.item >= items.len() {
                return Err(Error::InvalidArgument(format!(
                    "interaction ({}, {}) outside index ranges ({} users, {} items)",
                    x.user,
                    x.item,
                    users.len(),
                    items.len()
                )));
            }
            if !seen.insert((x.user, x.item)) {
                return Err(Error::InvalidArgument(format!(
                    "duplicate interaction ({}, {})",
                    x.user, x.item
                )));
            }
            if Some(x.rating.is_some()) != explicit {
                return Err(Error::InvalidArgument(
                    "ratings must be present on every interaction or on none".into(),
                ));
            }
        }
        Ok(Dataset {
            interactions,
            users,
            items,
        })
    }

    /// Same index maps, different interactions.
    pub fn with_interactions(&self, interactions: Vec<Interaction>) -> Result<Self> {
        Dataset::new(self.users.clone(), self.items.clone(), interactions)
    }

    pub fn interactions(&self) -> &[Interaction] {
        &self.interactions
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn num_items(&self) -> usize {
        self.items.len()
    }

    pub fn users(&self) -> &IdMap {
        &self.users
    }

    pub fn items(&self) -> &IdMap {
        &self.items
    }

    pub fn user_map(&self) -> Arc<IdMap> {
        self.users.clone()
    }

    pub fn item_map(&self) -> Arc<IdMap> {
        self.items.clone()
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn has_ratings(&self) -> bool {
        self.interactions.first().is_some_and(|x| x.rating.is_some())
    }

    pub fn has_timestamps(&self) -> bool {
        !self.interactions.is_empty() && self.interactions.iter().all(|x| x.timestamp.is_some())
    }

    /// Items per user, each list sorted ascending.
    pub fn items_by_user(&self) -> Vec<Vec<usize>> {
        let mut lists = vec![Vec::new(); self.num_users()];
        for x in &self.interactions {
            lists[x.user].push(x.item);
        }
        for list in &mut lists {
            list.sort_unstable();
        }
        lists
    }

    /// Users per item, each list sorted ascending.
    pub fn users_by_item(&self) -> Vec<Vec<usize>> {
        let mut lists = vec![Vec::new(); self.num_items()];
        for x in &self.interactions {
            lists[x.item].push(x.user);
        }
        for list in &mut lists {
            list.sort_unstable();
        }
        lists
    }
}

/// Read access to a feature-indexed row, sparse or dense.
pub trait FeatureRow {
    fn dim(&self) -> usize;

    fn value(&self, feature: usize) -> f64;

    /// Calls `f` on every stored coordinate. Dense rows store every coordinate.
    fn for_each_stored(&self, f: impl FnMut(usize, f64));

    fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.for_each_stored(|i, v| out[i] = v);
        out
    }

    fn squared_norm(&self) -> f64 {
        let mut acc = 0.0;
        self.for_each_stored(|_, v| acc += v * v);
        acc
    }

    fn norm(&self) -> f64 {
        self.squared_norm().sqrt()
    }
}

impl FeatureRow for [f64] {
    fn dim(&self) -> usize {
        self.len()
    }

    fn value(&self, feature: usize) -> f64 {
        self[feature]
    }

    fn for_each_stored(&self, mut f: impl FnMut(usize, f64)) {
        for (i, &v) in self.iter().enumerate() {
            f(i, v);
        }
    }

    fn to_dense(&self) -> Vec<f64> {
        self.to_vec()
    }
}

impl FeatureRow for Vec<f64> {
    fn dim(&self) -> usize {
        self.len()
    }

    fn value(&self, feature: usize) -> f64 {
        self[feature]
    }

    fn for_each_stored(&self, f: impl FnMut(usize, f64)) {
        self.as_slice().for_each_stored(f)
    }
}

impl<R: FeatureRow + ?Sized> FeatureRow for &R {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn value(&self, feature: usize) -> f64 {
        (**self).value(feature)
    }

    fn for_each_stored(&self, f: impl FnMut(usize, f64)) {
        (**self).for_each_stored(f)
    }
}

/// Feature-indexed vector in canonical sparse form: entries sorted by id,
/// all finite, no stored zeros.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseVector {
    dim: usize,
    entries: Vec<(usize, f64)>,
}

impl SparseVector {
    pub fn zeros(dim: usize) -> Self {
        SparseVector {
            dim,
            entries: Vec::new(),
        }
    }

    /// Builds a canonical vector. Zeros are dropped; duplicate ids, ids outside
    /// the dimension and non-finite values are rejected.
    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut entries: Vec<(usize, f64)> = Vec::new();
        for (id, v) in pairs {
            if id >= dim {
                return Err(Error::InvalidArgument(format!(
                    "feature id {id} out of range for dimension {dim}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::InvalidArgument(format!("non-finite value {v} at feature {id}")));
            }
            if v != 0.0 {
                entries.push((id, v));
            }
        }
        entries.sort_unstable_by_key(|&(id, _)| id);
        if entries.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::InvalidArgument("duplicate feature id in sparse vector".into()));
        }
        Ok(SparseVector { dim, entries })
    }

    pub fn from_dense(values: &[f64]) -> Result<Self> {
        Self::from_pairs(values.len(), values.iter().copied().enumerate())
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    pub fn is_zero(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(usize, f64)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.entries.iter().copied()
    }
}

impl FeatureRow for SparseVector {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, feature: usize) -> f64 {
        match self.entries.binary_search_by_key(&feature, |&(id, _)| id) {
            Ok(pos) => self.entries[pos].1,
            Err(_) => 0.0,
        }
    }

    fn for_each_stored(&self, mut f: impl FnMut(usize, f64)) {
        for &(id, v) in &self.entries {
            f(id, v);
        }
    }
}

/// `Σ_f a_f · b_f` over the stored coordinates of `a`.
pub fn dot<A: FeatureRow + ?Sized, B: FeatureRow + ?Sized>(a: &A, b: &B) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let mut acc = 0.0;
    a.for_each_stored(|f, v| acc += v * b.value(f));
    Ok(acc)
}

/// Dense-slice dot product without a dimension check; callers guarantee equal lengths.
#[inline]
pub(crate) fn dot_dense(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Ranking order used everywhere a row is sorted: value descending, then
/// feature id ascending. Unstored coordinates count as 0.
#[inline]
pub(crate) fn rank_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0))
}

/// The `k` highest coordinates of `v`, value descending, ties by ascending id.
pub fn top_k<R: FeatureRow + ?Sized>(v: &R, k: usize) -> Vec<(usize, f64)> {
    let k = k.min(v.dim());
    if k == 0 {
        return Vec::new();
    }
    let mut all: Vec<(usize, f64)> = v.to_dense().into_iter().enumerate().collect();
    if k < all.len() {
        all.select_nth_unstable_by(k - 1, |a, b| rank_order(*a, *b));
        all.truncate(k);
    }
    all.sort_unstable_by(|a, b| rank_order(*a, *b));
    all
}

/// 1-based position of `feature` in the full [`top_k`] ordering of `v`, so
/// `feature ∈ top_k(v, k)` exactly when `rank_of(v, feature) <= k`.
pub fn rank_of<R: FeatureRow + ?Sized>(v: &R, feature: usize) -> usize {
    let target = (feature, v.value(feature));
    let mut ahead = 0;
    for (id, value) in v.to_dense().into_iter().enumerate() {
        if id != feature && rank_order((id, value), target) == Ordering::Less {
            ahead += 1;
        }
    }
    ahead + 1
}
