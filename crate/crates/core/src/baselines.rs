//! Comparison systems: popularity, Pearson item and user kNN, TF-IDF content
//! models, and a randomly initialized BPR-FM.

use std::sync::Arc;

use rayon::prelude::*;

use crate::bpr;
use crate::error::Result;
use crate::fm::{init_random, FmParams};
use crate::knn::{cosine, rank_unrated, NeighborIndex, MIN_DENOMINATOR};
use crate::model::Dataset;
use crate::profiles::ProfileMatrix;
use crate::registry::{FitContext, ItemKnn, Recommender};

/// Training interaction count per item.
pub struct MostPopular {
    counts: Vec<usize>,
    history: Arc<Vec<Vec<usize>>>,
}

impl MostPopular {
    pub fn fit(train: &Dataset) -> Self {
        let mut counts = vec![0; train.num_items()];
        for x in train.interactions() {
            counts[x.item] += 1;
        }
        MostPopular {
            counts,
            history: Arc::new(train.items_by_user()),
        }
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }
}

impl Recommender for MostPopular {
    fn name(&self) -> &str {
        "mostpop"
    }

    fn recommend(&self, user: usize, n: usize) -> Vec<(usize, f64)> {
        rank_unrated(self.counts.len(), &self.history[user], n, |i| self.counts[i] as f64)
    }
}

pub fn most_popular(train: &Dataset, n: usize) -> Vec<Vec<(usize, f64)>> {
    let model = MostPopular::fit(train);
    (0..train.num_users()).map(|u| model.recommend(u, n)).collect()
}

/// Pearson correlation between two entities from their co-occurrence sums.
///
/// With ratings the correlation is taken over co-raters only, each side
/// centered on its own co-rater mean. Without ratings (implicit feedback) the
/// entities are binary vectors over the full population of size `population`.
/// Fewer than two co-occurrences give 0.
#[derive(Debug, Default, Clone, Copy)]
struct CoSums {
    n: usize,
    sa: f64,
    sb: f64,
    saa: f64,
    sbb: f64,
    sab: f64,
}

impl CoSums {
    fn add(&mut self, a: f64, b: f64) {
        self.n += 1;
        self.sa += a;
        self.sb += b;
        self.saa += a * a;
        self.sbb += b * b;
        self.sab += a * b;
    }

    fn explicit_correlation(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        let cov = self.sab - self.sa * self.sb / n;
        let va = self.saa - self.sa * self.sa / n;
        let vb = self.sbb - self.sb * self.sb / n;
        let den = (va * vb).sqrt();
        if den.is_nan() || den <= MIN_DENOMINATOR {
            return 0.0;
        }
        (cov / den).clamp(-1.0, 1.0)
    }
}

fn implicit_correlation(co: usize, count_a: usize, count_b: usize, population: usize) -> f64 {
    if co < 2 {
        return 0.0;
    }
    let (n, a, b, ab) = (population as f64, count_a as f64, count_b as f64, co as f64);
    let den = (a * (n - a) * b * (n - b)).sqrt();
    if den.is_nan() || den <= MIN_DENOMINATOR {
        return 0.0;
    }
    ((n * ab - a * b) / den).clamp(-1.0, 1.0)
}

/// Correlation rows for entities described by `profiles[e] = [(other, value)]`,
/// using the transposed lists `inverse[other] = [(e, value)]`. Only nonzero
/// correlations are returned.
fn pearson_rows(
    profiles: &[Vec<(usize, f64)>],
    inverse: &[Vec<(usize, f64)>],
    implicit: bool,
) -> Vec<Vec<(usize, f64)>> {
    let population = inverse.len();
    (0..profiles.len())
        .into_par_iter()
        .map(|a| {
            let mut sums: Vec<CoSums> = vec![CoSums::default(); profiles.len()];
            let mut touched = Vec::new();
            for &(other, ra) in &profiles[a] {
                for &(b, rb) in &inverse[other] {
                    if b == a {
                        continue;
                    }
                    if sums[b].n == 0 {
                        touched.push(b);
                    }
                    sums[b].add(ra, rb);
                }
            }
            touched.sort_unstable();
            touched
                .into_iter()
                .filter_map(|b| {
                    let s = &sums[b];
                    let corr = if implicit {
                        implicit_correlation(s.n, profiles[a].len(), profiles[b].len(), population)
                    } else {
                        s.explicit_correlation()
                    };
                    (corr != 0.0).then_some((b, corr))
                })
                .collect()
        })
        .collect()
}

/// `(other id, rating)` lists per item and per user.
type RatingLists = Vec<Vec<(usize, f64)>>;

fn rating_lists(train: &Dataset) -> (RatingLists, RatingLists) {
    let mut by_item = vec![Vec::new(); train.num_items()];
    let mut by_user = vec![Vec::new(); train.num_users()];
    for x in train.interactions() {
        let r = x.rating.unwrap_or(1.0);
        by_item[x.item].push((x.user, r));
        by_user[x.user].push((x.item, r));
    }
    for list in by_item.iter_mut().chain(by_user.iter_mut()) {
        list.sort_unstable_by_key(|&(id, _)| id);
    }
    (by_item, by_user)
}

/// Item-item Pearson correlations, nonzero entries only, sorted by item id.
pub fn item_pearson(train: &Dataset) -> Vec<Vec<(usize, f64)>> {
    let (by_item, by_user) = rating_lists(train);
    pearson_rows(&by_item, &by_user, !train.has_ratings())
}

/// User-user Pearson correlations, nonzero entries only, sorted by user id.
pub fn user_pearson(train: &Dataset) -> Vec<Vec<(usize, f64)>> {
    let (by_item, by_user) = rating_lists(train);
    pearson_rows(&by_user, &by_item, !train.has_ratings())
}

pub fn itemknn_pearson(train: &Dataset, k_nn: usize) -> Result<ItemKnn> {
    let index = NeighborIndex::from_lists(k_nn, item_pearson(train))?;
    Ok(ItemKnn::new("itemknn", index, Arc::new(train.items_by_user())))
}

/// User-based kNN: `Σ_{v ∈ N^u, i ∈ I^v} s(u,v) / Σ_{v ∈ N^u} s(u,v)`.
pub struct UserKnn {
    neighbors: NeighborIndex,
    history: Arc<Vec<Vec<usize>>>,
    num_items: usize,
}

impl UserKnn {
    pub fn fit(train: &Dataset, k_nn: usize) -> Result<Self> {
        Ok(UserKnn {
            neighbors: NeighborIndex::from_lists(k_nn, user_pearson(train))?,
            history: Arc::new(train.items_by_user()),
            num_items: train.num_items(),
        })
    }

    pub fn scores(&self, user: usize) -> Vec<f64> {
        let mut num = vec![0.0; self.num_items];
        let mut den = 0.0;
        for &(v, s) in self.neighbors.neighbors(user) {
            den += s;
            for &i in &self.history[v] {
                num[i] += s;
            }
        }
        if den.abs() < MIN_DENOMINATOR {
            return vec![0.0; self.num_items];
        }
        num.into_iter().map(|x| x / den).collect()
    }
}

impl Recommender for UserKnn {
    fn name(&self) -> &str {
        "userknn"
    }

    fn recommend(&self, user: usize, n: usize) -> Vec<(usize, f64)> {
        let scores = self.scores(user);
        rank_unrated(self.num_items, &self.history[user], n, |i| scores[i])
    }
}

/// Ranks items by cosine between the user's TF-IDF profile and each item vector.
pub struct VsmProfileCosine {
    profiles: Arc<ProfileMatrix>,
    history: Arc<Vec<Vec<usize>>>,
}

impl VsmProfileCosine {
    pub fn new(profiles: Arc<ProfileMatrix>, train: &Dataset) -> Self {
        VsmProfileCosine {
            profiles,
            history: Arc::new(train.items_by_user()),
        }
    }
}

impl Recommender for VsmProfileCosine {
    fn name(&self) -> &str {
        "vsm"
    }

    fn recommend(&self, user: usize, n: usize) -> Vec<(usize, f64)> {
        let p = &self.profiles;
        let u = p.user_row(user);
        rank_unrated(p.num_items(), &self.history[user], n, |i| cosine(u, p.item_row(i)))
    }
}

/// Attribute-based Item-kNN: cosine neighbors over untrained TF-IDF item vectors.
pub fn abitemknn(profiles: &ProfileMatrix, train: &Dataset, k_nn: usize) -> Result<ItemKnn> {
    let index = NeighborIndex::cosine(profiles.item_rows(), k_nn)?;
    Ok(ItemKnn::new("abitemknn", index, Arc::new(train.items_by_user())))
}

/// Plain FM ranked directly by `ŷ(u, i)`.
pub struct FmScoreRanker {
    params: FmParams,
    history: Arc<Vec<Vec<usize>>>,
}

impl FmScoreRanker {
    pub fn new(params: FmParams, train: &Dataset) -> Self {
        FmScoreRanker {
            params,
            history: Arc::new(train.items_by_user()),
        }
    }

    pub fn params(&self) -> &FmParams {
        &self.params
    }
}

impl Recommender for FmScoreRanker {
    fn name(&self) -> &str {
        "bprfm"
    }

    fn recommend(&self, user: usize, n: usize) -> Vec<(usize, f64)> {
        rank_unrated(self.params.num_items(), &self.history[user], n, |i| {
            self.params.score_pair_unchecked(user, i)
        })
    }
}

/// Random init with `k` factors, then BPR training.
pub fn bprfm_random(train: &Dataset, hyper: &bpr::BprHyper, k: usize, seed: u64, scale: f64) -> Result<FmScoreRanker> {
    let mut params = init_random(train.num_users(), train.num_items(), k, seed, scale)?;
    bpr::train(&mut params, train, hyper)?;
    Ok(FmScoreRanker::new(params, train))
}

pub(crate) fn build_most_popular(ctx: &FitContext<'_>) -> Result<Box<dyn Recommender>> {
    Ok(Box::new(MostPopular::fit(ctx.train)))
}

pub(crate) fn build_itemknn(ctx: &FitContext<'_>) -> Result<Box<dyn Recommender>> {
    Ok(Box::new(itemknn_pearson(ctx.train, ctx.settings.k_nn)?))
}

pub(crate) fn build_userknn(ctx: &FitContext<'_>) -> Result<Box<dyn Recommender>> {
    Ok(Box::new(UserKnn::fit(ctx.train, ctx.settings.k_nn)?))
}

pub(crate) fn build_vsm(ctx: &FitContext<'_>) -> Result<Box<dyn Recommender>> {
    let profiles = ctx.require_profiles("vsm")?;
    Ok(Box::new(VsmProfileCosine::new(Arc::new(profiles.clone()), ctx.train)))
}

pub(crate) fn build_abitemknn(ctx: &FitContext<'_>) -> Result<Box<dyn Recommender>> {
    let profiles = ctx.require_profiles("abitemknn")?;
    Ok(Box::new(abitemknn(profiles, ctx.train, ctx.settings.k_nn)?))
}

pub(crate) fn build_bprfm(ctx: &FitContext<'_>) -> Result<Box<dyn Recommender>> {
    let k = match ctx.settings.factors {
        Some(k) => k,
        None => ctx.require_profiles("bprfm")?.dim(),
    };
    let s = ctx.settings;
    Ok(Box::new(bprfm_random(
        ctx.train,
        &s.hyper,
        k,
        s.init_seed,
        s.random_scale,
    )?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_interactions;

    fn ds(text: &str) -> Dataset {
        parse_interactions(text.as_bytes(), "t").unwrap()
    }

    /// Straight two-pass Pearson over paired samples.
    fn pearson_oracle(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len() as f64;
        let ma = a.iter().sum::<f64>() / n;
        let mb = b.iter().sum::<f64>() / n;
        let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn most_popular_order_and_ties() {
        // counts: a=5, b=3, c=1
        let log = "u1\ta\nu2\ta\nu3\ta\nu4\ta\nu5\ta\nu1\tb\nu2\tb\nu3\tb\nu6\tc\n";
        let train = ds(log);
        let lists = most_popular(&train, 3);
        let u6 = train.users().dense("u6").unwrap();
        let ids: Vec<usize> = lists[u6].iter().map(|r| r.0).collect();
        assert_eq!(ids, vec![0, 1]);
        let u1 = train.users().dense("u1").unwrap();
        assert_eq!(lists[u1].iter().map(|r| r.0).collect::<Vec<_>>(), vec![2]);

        let tie = ds("u1\tx\nu2\ty\nu3\tz\n");
        let top = most_popular(&tie, 3);
        assert_eq!(top[2].iter().map(|r| r.0).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn explicit_pearson_matches_hand_oracle() {
        // items x, y co-rated by three users
        let log = "u1\tx\t5\nu1\ty\t4\nu2\tx\t3\nu2\ty\t1\nu3\tx\t4\nu3\ty\t4\nu4\tz\t2\n";
        let train = ds(log);
        let rows = item_pearson(&train);
        let expected = pearson_oracle(&[5.0, 3.0, 4.0], &[4.0, 1.0, 4.0]);
        assert!((rows[0][0].1 - expected).abs() < 1e-12);
        assert_eq!(rows[0][0].0, 1);
        // symmetric
        assert!((rows[1][0].1 - expected).abs() < 1e-12);
        // z shares no users with x or y
        assert!(rows[2].is_empty());
    }

    #[test]
    fn identical_rating_vectors_correlate_perfectly() {
        let train = ds("u1\tx\t5\nu1\ty\t5\nu2\tx\t2\nu2\ty\t2\nu3\tx\t3\nu3\ty\t3\n");
        let rows = item_pearson(&train);
        assert!((rows[0][0].1 - 1.0).abs() < 1e-12);
        // clone users as well
        let users = user_pearson(&ds("a\tx\t5\na\ty\t1\na\tz\t3\nb\tx\t5\nb\ty\t1\nb\tz\t3\n"));
        assert!((users[0][0].1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn user_pearson_hand_table() {
        // 3 users x 3 items
        let log = "a\tx\t1\na\ty\t2\na\tz\t3\nb\tx\t2\nb\ty\t2\nb\tz\t5\nc\tx\t5\nc\ty\t4\nc\tz\t1\n";
        let rows = user_pearson(&ds(log));
        let a = [1.0, 2.0, 3.0];
        let b = [2.0, 2.0, 5.0];
        let c = [5.0, 4.0, 1.0];
        let find = |u: usize, v: usize| rows[u].iter().find(|e| e.0 == v).unwrap().1;
        assert!((find(0, 1) - pearson_oracle(&a, &b)).abs() < 1e-12);
        assert!((find(0, 2) - pearson_oracle(&a, &c)).abs() < 1e-12);
        assert!((find(1, 2) - pearson_oracle(&b, &c)).abs() < 1e-12);
        // disjoint histories
        let disjoint = user_pearson(&ds("a\tx\t1\na\ty\t2\nb\tz\t3\nb\tw\t4\n"));
        assert!(disjoint.iter().all(Vec::is_empty));
    }

    #[test]
    fn implicit_pearson_is_binary_correlation() {
        // 4 users; items x and y share users u1,u2; y also has u3
        let train = ds("u1\tx\nu2\tx\nu1\ty\nu2\ty\nu3\ty\nu4\tz\n");
        let rows = item_pearson(&train);
        let xv = [1.0, 1.0, 0.0, 0.0];
        let yv = [1.0, 1.0, 1.0, 0.0];
        assert!((rows[0][0].1 - pearson_oracle(&xv, &yv)).abs() < 1e-12);
    }

    #[test]
    fn baselines_never_recommend_training_items() {
        let train = ds("a\tx\t5\na\ty\t3\nb\tx\t4\nb\tz\t2\nc\ty\t5\nc\tz\t4\nc\tw\t1\n");
        let history = train.items_by_user();
        let systems: Vec<Box<dyn Recommender>> = vec![
            Box::new(MostPopular::fit(&train)),
            Box::new(itemknn_pearson(&train, 5).unwrap()),
            Box::new(UserKnn::fit(&train, 5).unwrap()),
        ];
        for s in &systems {
            for (u, h) in history.iter().enumerate() {
                let recs = s.recommend(u, 10);
                assert_eq!(recs.len(), train.num_items() - h.len(), "{}", s.name());
                assert!(recs.iter().all(|(i, _)| !h.contains(i)));
            }
        }
    }

    #[test]
    fn bprfm_zero_scale_no_training_is_tie_order() {
        let train = ds("a\tx\nb\ty\nc\tz\n");
        let hyper = bpr::BprHyper {
            iterations: 0,
            ..Default::default()
        };
        let model = bprfm_random(&train, &hyper, 3, 1, 0.0).unwrap();
        let recs = model.recommend(0, 5);
        assert_eq!(recs, vec![(1, 0.0), (2, 0.0)]);
    }
}
