//! Hold-out splits and top-N accuracy under the All Unrated Items protocol.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::model::{Dataset, Interaction};
use crate::registry::{recommend_all, Recommender};
use crate::seed;

/// Relevance threshold applied when the log carries ratings and none is given.
pub const DEFAULT_RELEVANCE_THRESHOLD: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SplitConfig {
    /// Fraction of each user's interactions kept for training.
    pub ratio: f64,
    pub temporal: bool,
    pub seed: u64,
    pub relevance_threshold: Option<f64>,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            ratio: 0.8,
            temporal: false,
            seed: 0,
            relevance_threshold: None,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return Err(Error::Config(format!(
                "split ratio must be in (0, 1), got {}",
                self.ratio
            )));
        }
        if let Some(t) = self.relevance_threshold {
            if !t.is_finite() {
                return Err(Error::Config(format!("invalid relevance threshold {t}")));
            }
        }
        Ok(())
    }

    /// Threshold in effect for `data`: none for implicit feedback.
    pub fn threshold_for(&self, data: &Dataset) -> Option<f64> {
        if data.has_ratings() {
            Some(self.relevance_threshold.unwrap_or(DEFAULT_RELEVANCE_THRESHOLD))
        } else {
            None
        }
    }
}

/// Number of training interactions for a user with `n` interactions.
pub fn train_count(n: usize, ratio: f64) -> usize {
    if n <= 1 {
        return n;
    }
    // the small slack keeps products like 0.8 * 5 from rounding up to 5
    ((ratio * n as f64 - 1e-9).ceil() as usize).clamp(1, n)
}

/// Splits every user's interactions into train and test.
///
/// Temporal mode keeps the earliest interactions (ties by item id) and needs
/// timestamps; otherwise each user's interactions are shuffled with a seeded
/// stream. Both halves share the full user and item index maps.
pub fn holdout_split(data: &Dataset, config: &SplitConfig) -> Result<(Dataset, Dataset)> {
    config.validate()?;
    if config.temporal && !data.has_timestamps() {
        return Err(Error::Config(
            "temporal split requested but the log has no timestamps".into(),
        ));
    }
    let mut by_user: Vec<Vec<usize>> = vec![Vec::new(); data.num_users()];
    for (pos, x) in data.interactions().iter().enumerate() {
        by_user[x.user].push(pos);
    }
    let all = data.interactions();
    let mut rng = seed::rng(config.seed, "holdout-split");
    let mut in_train = vec![false; all.len()];
    for positions in &mut by_user {
        if config.temporal {
            positions.sort_by_key(|&p| (all[p].timestamp, all[p].item));
        } else {
            positions.sort_by_key(|&p| all[p].item);
            positions.shuffle(&mut rng);
        }
        for &p in &positions[..train_count(positions.len(), config.ratio)] {
            in_train[p] = true;
        }
    }
    let (train, test): (Vec<_>, Vec<_>) = (0..all.len()).partition(|&p| in_train[p]);
    let pick = |v: Vec<usize>| v.into_iter().map(|p| all[p]).collect::<Vec<Interaction>>();
    Ok((
        data.with_interactions(pick(train))?,
        data.with_interactions(pick(test))?,
    ))
}

/// Relevant test items per user, sorted: rating at least `threshold`, or every
/// test item when `threshold` is `None`.
pub fn relevant_items(test: &Dataset, threshold: Option<f64>) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new(); test.num_users()];
    for x in test.interactions() {
        let relevant = match (threshold, x.rating) {
            (Some(t), Some(r)) => r >= t,
            _ => true,
        };
        if relevant {
            out[x.user].push(x.item);
        }
    }
    for list in &mut out {
        list.sort_unstable();
    }
    out
}

/// 1-based ranks of the relevant items among the first `n` recommendations.
fn hits<'a>(recs: &'a [usize], relevant: &'a [usize], n: usize) -> impl Iterator<Item = usize> + 'a {
    recs.iter()
        .take(n)
        .enumerate()
        .filter(move |(_, i)| relevant.contains(i))
        .map(|(r, _)| r + 1)
}

/// `|top-N ∩ relevant| / N`.
pub fn precision_at(recs: &[usize], relevant: &[usize], n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    hits(recs, relevant, n).count() as f64 / n as f64
}

/// Binary-gain nDCG with the ideal ranking truncated at `min(N, |relevant|)`.
pub fn ndcg_at(recs: &[usize], relevant: &[usize], n: usize) -> f64 {
    let ideal = n.min(relevant.len());
    if ideal == 0 {
        return 0.0;
    }
    let gain = |r: usize| 1.0 / ((r + 1) as f64).log2();
    let dcg: f64 = hits(recs, relevant, n).map(gain).sum();
    let idcg: f64 = (1..=ideal).map(gain).sum();
    dcg / idcg
}

/// Run description and metrics, both keyed by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalReport {
    pub fingerprint: BTreeMap<String, String>,
    pub metrics: BTreeMap<String, f64>,
}

/// Averages Prec@N and nDCG@N over users with at least one relevant test item.
pub fn accuracy_metrics(lists: &[Vec<usize>], relevant: &[Vec<usize>], n: usize) -> BTreeMap<String, f64> {
    let mut users = 0usize;
    let mut precision = 0.0;
    let mut ndcg = 0.0;
    for (recs, rel) in lists.iter().zip(relevant) {
        if rel.is_empty() {
            continue;
        }
        users += 1;
        precision += precision_at(recs, rel, n);
        ndcg += ndcg_at(recs, rel, n);
    }
    let mut m = BTreeMap::new();
    let avg = |s: f64| if users == 0 { 0.0 } else { s / users as f64 };
    m.insert(format!("precision@{n}"), avg(precision));
    m.insert(format!("ndcg@{n}"), avg(ndcg));
    m.insert("evaluated_users".into(), users as f64);
    m
}

/// Ranks all unrated items for every user and scores the lists against `test`.
pub fn evaluate_run(
    system: &dyn Recommender,
    train: &Dataset,
    test: &Dataset,
    split: &SplitConfig,
    n: usize,
    fingerprint: BTreeMap<String, String>,
) -> Result<EvalReport> {
    if train.num_users() != test.num_users() || train.num_items() != test.num_items() {
        return Err(Error::DimensionMismatch {
            left: train.num_users() + train.num_items(),
            right: test.num_users() + test.num_items(),
        });
    }
    let lists: Vec<Vec<usize>> = recommend_all(system, train.num_users(), n)
        .into_iter()
        .map(|l| l.into_iter().map(|(i, _)| i).collect())
        .collect();
    let relevant = relevant_items(test, split.threshold_for(test));
    let mut fingerprint = fingerprint;
    fingerprint.insert("system".into(), system.name().to_owned());
    fingerprint.insert("cutoff".into(), n.to_string());
    Ok(EvalReport {
        fingerprint,
        metrics: accuracy_metrics(&lists, &relevant, n),
    })
}

impl EvalReport {
    /// Flat text block: a `[run]` section of fingerprint entries and a
    /// `[metrics]` section, one `key = value` per line.
    pub fn to_kv(&self) -> String {
        let mut s = String::from("[run]\n");
        for (k, v) in &self.fingerprint {
            let _ = writeln!(s, "{k} = {v}");
        }
        s.push_str("[metrics]\n");
        for (k, v) in &self.metrics {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("section\tkey\tvalue\n");
        for (k, v) in &self.fingerprint {
            let _ = writeln!(s, "run\t{k}\t{v}");
        }
        for (k, v) in &self.metrics {
            let _ = writeln!(s, "metrics\t{k}\t{v}");
        }
        s
    }

    pub fn parse_kv(text: &str, source_name: &str) -> Result<Self> {
        let mut report = EvalReport::default();
        let mut section = "";
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = match name {
                    "run" => "run",
                    "metrics" => "metrics",
                    other => return Err(Error::parse(source_name, idx + 1, format!("unknown section `{other}`"))),
                };
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source_name, idx + 1, "expected `key = value`"))?;
            let (k, v) = (k.trim().to_owned(), v.trim());
            match section {
                "run" => {
                    report.fingerprint.insert(k, v.to_owned());
                }
                "metrics" => {
                    let x = v
                        .parse()
                        .map_err(|_| Error::parse(source_name, idx + 1, format!("bad metric value `{v}`")))?;
                    report.metrics.insert(k, x);
                }
                _ => return Err(Error::parse(source_name, idx + 1, "entry before any section")),
            }
        }
        Ok(report)
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_kv())
    }
}

/// One line of a report comparison.
#[derive(Debug, Clone, PartialEq)]
pub enum ReportDiff {
    Run {
        key: String,
        left: Option<String>,
        right: Option<String>,
    },
    Metric {
        key: String,
        left: Option<f64>,
        right: Option<f64>,
    },
}

/// Differences between two reports: fingerprint entries that differ and
/// every metric present in either report.
pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> Vec<ReportDiff> {
    let mut out = Vec::new();
    let keys: BTreeSet<&String> = a.fingerprint.keys().chain(b.fingerprint.keys()).collect();
    for k in keys {
        let (l, r) = (a.fingerprint.get(k), b.fingerprint.get(k));
        if l != r {
            out.push(ReportDiff::Run {
                key: k.clone(),
                left: l.cloned(),
                right: r.cloned(),
            });
        }
    }
    let keys: BTreeSet<&String> = a.metrics.keys().chain(b.metrics.keys()).collect();
    for k in keys {
        out.push(ReportDiff::Metric {
            key: k.clone(),
            left: a.metrics.get(k).copied(),
            right: b.metrics.get(k).copied(),
        });
    }
    out
}

pub fn render_comparison(diffs: &[ReportDiff]) -> String {
    let show = |x: &Option<f64>| x.map_or("-".to_owned(), |v| format!("{v:.6}"));
    let mut s = String::new();
    for d in diffs {
        match d {
            ReportDiff::Run { key, left, right } => {
                let _ = writeln!(
                    s,
                    "run\t{key}\t{}\t{}",
                    left.as_deref().unwrap_or("-"),
                    right.as_deref().unwrap_or("-")
                );
            }
            ReportDiff::Metric { key, left, right } => {
                let delta = match (left, right) {
                    (Some(l), Some(r)) => format!("{:+.6}", r - l),
                    _ => "-".into(),
                };
                let _ = writeln!(s, "metric\t{key}\t{}\t{}\t{delta}", show(left), show(right));
            }
        }
    }
    s
}
