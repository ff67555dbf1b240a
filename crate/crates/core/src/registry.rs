//! Recommender systems behind one trait, looked up by name at runtime.
//!
//! Every system ranks under the All Unrated Items protocol: a user's training
//! items never appear in their list.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use crate::baselines;
use crate::bpr::{self, BprHyper, EpochTrace};
use crate::error::{Error, Result};
use crate::fm::{init_kahfm, FmParams};
use crate::knn::{recommend_topn, NeighborIndex, DEFAULT_NEIGHBORS};
use crate::model::Dataset;
use crate::profiles::ProfileMatrix;

pub trait Recommender: Send + Sync {
    fn name(&self) -> &str;

    /// Top-`n` unrated items for `user`, score descending, ties by item id.
    fn recommend(&self, user: usize, n: usize) -> Vec<(usize, f64)>;
}

/// Knobs shared by the built-in systems.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemSettings {
    pub k_nn: usize,
    pub hyper: BprHyper,
    /// Standard deviation of the random factor initialization (BPR-FM).
    pub random_scale: f64,
    /// Factor count for BPR-FM; defaults to the retained feature count.
    pub factors: Option<usize>,
    pub init_seed: u64,
}

impl Default for SystemSettings {
    fn default() -> Self {
        SystemSettings {
            k_nn: DEFAULT_NEIGHBORS,
            hyper: BprHyper::default(),
            random_scale: 0.1,
            factors: None,
            init_seed: 0,
        }
    }
}

/// Everything a system may draw on while fitting.
pub struct FitContext<'a> {
    pub train: &'a Dataset,
    pub profiles: Option<&'a ProfileMatrix>,
    pub settings: &'a SystemSettings,
    /// Already trained feature-aligned parameters; when present the `kahfm`
    /// system uses them instead of training.
    pub pretrained: Option<&'a FmParams>,
}

impl FitContext<'_> {
    pub fn history(&self) -> Arc<Vec<Vec<usize>>> {
        Arc::new(self.train.items_by_user())
    }

    pub fn require_profiles(&self, system: &str) -> Result<&ProfileMatrix> {
        self.profiles
            .ok_or_else(|| Error::Config(format!("system `{system}` needs feature profiles")))
    }
}

pub type Factory = fn(&FitContext<'_>) -> Result<Box<dyn Recommender>>;

struct Entry {
    description: &'static str,
    factory: Factory,
}

/// Name → factory table for recommender systems.
pub struct SystemRegistry {
    entries: BTreeMap<String, Entry>,
}

impl SystemRegistry {
    pub fn empty() -> Self {
        SystemRegistry {
            entries: BTreeMap::new(),
        }
    }

    /// All built-in systems.
    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register(
            "kahfm",
            "feature-initialized FM + BPR, ranked by cosine Item-kNN",
            build_kahfm,
        );
        r.register(
            "bprfm",
            "randomly initialized FM + BPR, ranked by FM score",
            baselines::build_bprfm,
        );
        r.register("mostpop", "most popular training items", baselines::build_most_popular);
        r.register("itemknn", "item-item Pearson kNN", baselines::build_itemknn);
        r.register("userknn", "user-user Pearson kNN", baselines::build_userknn);
        r.register(
            "vsm",
            "cosine between TF-IDF user profile and item vectors",
            baselines::build_vsm,
        );
        r.register(
            "abitemknn",
            "cosine Item-kNN on TF-IDF item vectors",
            baselines::build_abitemknn,
        );
        r
    }

    pub fn register(&mut self, name: &str, description: &'static str, factory: Factory) {
        self.entries.insert(name.to_owned(), Entry { description, factory });
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn describe(&self) -> impl Iterator<Item = (&str, &'static str)> {
        self.entries.iter().map(|(k, e)| (k.as_str(), e.description))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn build(&self, name: &str, ctx: &FitContext<'_>) -> Result<Box<dyn Recommender>> {
        let entry = self.entries.get(name).ok_or_else(|| Error::Unknown {
            kind: "system",
            id: name.to_owned(),
        })?;
        (entry.factory)(ctx)
    }
}

impl Default for SystemRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

/// Ranked lists for every user, in user order.
pub fn recommend_all(system: &dyn Recommender, num_users: usize, n: usize) -> Vec<Vec<(usize, f64)>> {
    (0..num_users).into_par_iter().map(|u| system.recommend(u, n)).collect()
}

/// Cosine Item-kNN over any set of item vectors.
pub struct ItemKnn {
    name: String,
    index: NeighborIndex,
    history: Arc<Vec<Vec<usize>>>,
}

impl ItemKnn {
    pub fn new(name: impl Into<String>, index: NeighborIndex, history: Arc<Vec<Vec<usize>>>) -> Self {
        ItemKnn {
            name: name.into(),
            index,
            history,
        }
    }

    pub fn index(&self) -> &NeighborIndex {
        &self.index
    }
}

impl Recommender for ItemKnn {
    fn name(&self) -> &str {
        &self.name
    }

    fn recommend(&self, user: usize, n: usize) -> Vec<(usize, f64)> {
        recommend_topn(&self.index, &self.history[user], n)
    }
}

/// Feature-aligned initialization followed by BPR training.
pub fn train_kahfm(train: &Dataset, profiles: &ProfileMatrix, hyper: &BprHyper) -> Result<(FmParams, Vec<EpochTrace>)> {
    let mut params = init_kahfm(profiles);
    let trace = bpr::train(&mut params, train, hyper)?;
    Ok((params, trace))
}

/// Item-kNN over the trained item rows of a feature-aligned model.
pub fn kahfm_recommender(params: &FmParams, history: Arc<Vec<Vec<usize>>>, k_nn: usize) -> Result<ItemKnn> {
    let index = NeighborIndex::cosine(&params.item_rows(), k_nn)?;
    Ok(ItemKnn::new("kahfm", index, history))
}

fn build_kahfm(ctx: &FitContext<'_>) -> Result<Box<dyn Recommender>> {
    let trained;
    let params = match ctx.pretrained {
        Some(p) => p,
        None => {
            let profiles = ctx.require_profiles("kahfm")?;
            trained = train_kahfm(ctx.train, profiles, &ctx.settings.hyper)?.0;
            &trained
        }
    };
    Ok(Box::new(kahfm_recommender(params, ctx.history(), ctx.settings.k_nn)?))
}
