//! Seeded synthetic corpus: clustered items described by categorical,
//! ontological and factual triples, and users who mostly consume one cluster.
//!
//! Every item carries 3 to 8 categorical features drawn from its own cluster's
//! pool, so with more than one cluster no categorical feature covers the whole
//! catalog and every TF-IDF weight is strictly positive.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub users: usize,
    pub items: usize,
    pub clusters: usize,
    pub features_per_cluster: usize,
    pub min_history: usize,
    pub max_history: usize,
    /// Chance that a user's interaction comes from their preferred cluster.
    pub affinity: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            users: 60,
            items: 40,
            clusters: 4,
            features_per_cluster: 10,
            min_history: 5,
            max_history: 15,
            affinity: 0.8,
            seed: 0,
        }
    }
}

pub struct SynthCorpus {
    /// `user \t item \t rating \t timestamp` lines.
    pub interactions: String,
    /// `item \t predicate \t object` lines with CURIE terms.
    pub triples: String,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCorpus> {
    if cfg.clusters < 2 || cfg.items < cfg.clusters || cfg.features_per_cluster < 8 {
        return Err(Error::InvalidArgument(
            "need at least 2 clusters, one item per cluster and 8 features per cluster".into(),
        ));
    }
    if cfg.min_history == 0 || cfg.min_history > cfg.max_history || cfg.max_history >= cfg.items {
        return Err(Error::InvalidArgument(
            "history bounds must satisfy 1 <= min <= max < items".into(),
        ));
    }
    let mut rng = seed::rng(cfg.seed, "synth");
    let cluster_of: Vec<usize> = (0..cfg.items).map(|i| i % cfg.clusters).collect();
    let members: Vec<Vec<usize>> = (0..cfg.clusters)
        .map(|c| (0..cfg.items).filter(|&i| cluster_of[i] == c).collect())
        .collect();

    let mut triples = String::new();
    for (item, &c) in cluster_of.iter().enumerate() {
        let count = rng.random_range(3..=8);
        let pool: Vec<usize> = (0..cfg.features_per_cluster).collect();
        let mut picked: Vec<usize> = pool.choose_multiple(&mut rng, count).copied().collect();
        picked.sort_unstable();
        for f in picked {
            let _ = writeln!(triples, "i{item}\tdct:subject\tdbc:Cluster{c}_Topic{f}");
        }
        let _ = writeln!(triples, "i{item}\trdf:type\tdbo:Kind{c}");
        let _ = writeln!(
            triples,
            "i{item}\tdbo:director\tdbr:Director{}",
            rng.random_range(0..cfg.clusters * 2)
        );
        let _ = writeln!(triples, "i{item}\towl:sameAs\t<http://example.org/mirror/i{item}>");
    }

    let mut interactions = String::new();
    let mut seen_items = BTreeSet::new();
    let mut clock: i64 = 1_000_000;
    let mut lines: Vec<(usize, usize, u8, i64)> = Vec::new();
    for user in 0..cfg.users {
        let home = rng.random_range(0..cfg.clusters);
        let len = rng.random_range(cfg.min_history..=cfg.max_history);
        let mut chosen = BTreeSet::new();
        while chosen.len() < len {
            let item = if rng.random_bool(cfg.affinity) {
                *members[home].choose(&mut rng).expect("non-empty cluster")
            } else {
                rng.random_range(0..cfg.items)
            };
            chosen.insert(item);
        }
        for item in chosen {
            let rating = if cluster_of[item] == home {
                rng.random_range(4..=5)
            } else {
                rng.random_range(1..=3)
            };
            clock += rng.random_range(1..500);
            lines.push((user, item, rating, clock));
            seen_items.insert(item);
        }
    }
    // items nobody picked go to a random user so the catalog is complete
    for item in 0..cfg.items {
        if seen_items.contains(&item) {
            continue;
        }
        let user = rng.random_range(0..cfg.users);
        clock += rng.random_range(1..500);
        lines.push((user, item, 3, clock));
    }
    for (user, item, rating, ts) in lines {
        let _ = writeln!(interactions, "u{user}\ti{item}\t{rating}\t{ts}");
    }
    Ok(SynthCorpus { interactions, triples })
}

/// Writes `interactions.tsv` and `triples.tsv` into `dir`.
pub fn write_corpus(cfg: &SynthConfig, dir: &Path) -> Result<()> {
    let corpus = generate(cfg)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, body) in [
        ("interactions.tsv", &corpus.interactions),
        ("triples.tsv", &corpus.triples),
    ] {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{
        filter_by_missing, parse_interactions, parse_triples, select_setting, PrefixTable, SettingKind, TripleFormat,
        TripleSource,
    };
    use crate::profiles::item_vectors;

    #[test]
    fn deterministic_and_well_formed() {
        let cfg = SynthConfig::default();
        let a = generate(&cfg).unwrap();
        let b = generate(&cfg).unwrap();
        assert_eq!(a.interactions, b.interactions);
        assert_eq!(a.triples, b.triples);
        let c = generate(&SynthConfig { seed: 1, ..cfg.clone() }).unwrap();
        assert_ne!(a.interactions, c.interactions);

        let data = parse_interactions(a.interactions.as_bytes(), "i").unwrap();
        assert_eq!(data.num_items(), cfg.items);
        assert!(data.has_ratings() && data.has_timestamps());

        let prefixes = PrefixTable::default();
        let source = TripleSource {
            format: TripleFormat::Tsv,
            prefixes: &prefixes,
            mapping: None,
        };
        let store = parse_triples(a.triples.as_bytes(), "t", &source, data.items()).unwrap();
        let cs = select_setting(&store, SettingKind::Categorical);
        let features = filter_by_missing(&cs, 100.0, cs.num_items()).unwrap();
        for v in item_vectors(&cs, &features).unwrap() {
            assert!((3..=8).contains(&v.nnz()));
            assert!(v.iter().all(|(_, x)| x > 0.0));
        }
    }

    #[test]
    fn rejects_degenerate_shapes() {
        assert!(generate(&SynthConfig {
            clusters: 1,
            ..Default::default()
        })
        .is_err());
        assert!(generate(&SynthConfig {
            max_history: 40,
            ..Default::default()
        })
        .is_err());
    }
}
