//! TF-IDF item descriptions, user profiles, and the stacked `|U| + |I|` by `|F|`
//! matrix used to initialize the factor matrix.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::ingest::FeatureStore;
use crate::model::{Dataset, FeatureRow, FeatureSet, SparseVector};

/// Normalized TF-IDF vector of one item over the retained features.
///
/// Feature presence is binary, so TF reduces to `1 / sqrt(|F^i ∩ F|)` and each
/// present feature gets `TF · ln(|I| / df(f))`.
pub fn tfidf_item_vector(
    item: usize,
    store: &FeatureStore,
    features: &FeatureSet,
    catalog_size: usize,
) -> Result<SparseVector> {
    let carried: Vec<(usize, usize)> = store
        .item_features(item)
        .iter()
        .filter_map(|f| features.id(f).map(|id| (id, store.feature_item_count(f))))
        .collect();
    if carried.is_empty() {
        return Ok(SparseVector::zeros(features.len()));
    }
    let tf = 1.0 / (carried.len() as f64).sqrt();
    let values = carried.into_iter().map(|(id, df)| {
        assert!(df > 0, "retained feature {id} has zero document frequency");
        (id, tf * (catalog_size as f64 / df as f64).ln())
    });
    SparseVector::from_pairs(features.len(), values)
}

pub fn item_vectors(store: &FeatureStore, features: &FeatureSet) -> Result<Vec<SparseVector>> {
    let catalog = store.num_items();
    (0..catalog)
        .into_par_iter()
        .map(|item| tfidf_item_vector(item, store, features, catalog))
        .collect()
}

/// `v(u,f) = Σ_{i∈I^u} v(i,f) / |{i ∈ I^u : v(i,f) ≠ 0}|`, with 0 when no item carries `f`.
pub fn user_profile(item_vectors: &[SparseVector], enjoyed: &[usize], dim: usize) -> Result<SparseVector> {
    let mut sums: HashMap<usize, (f64, usize)> = HashMap::new();
    for &item in enjoyed {
        for (f, v) in item_vectors[item].iter() {
            let slot = sums.entry(f).or_insert((0.0, 0));
            slot.0 += v;
            slot.1 += 1;
        }
    }
    SparseVector::from_pairs(dim, sums.into_iter().map(|(f, (sum, n))| (f, sum / n as f64)))
}

/// Which training interactions count as items a user enjoyed.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum EnjoyedItems {
    #[default]
    All,
    /// Only interactions rated at least this value; implicit data keeps everything.
    MinRating(f64),
}

/// Rows `0..|U|` are users, rows `|U|..|U|+|I|` are items.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileMatrix {
    num_users: usize,
    num_items: usize,
    dim: usize,
    rows: Vec<SparseVector>,
}

impl ProfileMatrix {
    pub fn from_rows(num_users: usize, num_items: usize, dim: usize, rows: Vec<SparseVector>) -> Result<Self> {
        if rows.len() != num_users + num_items {
            return Err(Error::InvalidArgument(format!(
                "expected {} profile rows, got {}",
                num_users + num_items,
                rows.len()
            )));
        }
        if let Some(r) = rows.iter().find(|r| r.dim() != dim) {
            return Err(Error::DimensionMismatch {
                left: r.dim(),
                right: dim,
            });
        }
        Ok(ProfileMatrix {
            num_users,
            num_items,
            dim,
            rows,
        })
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> &[SparseVector] {
        &self.rows
    }

    pub fn user_row(&self, user: usize) -> &SparseVector {
        &self.rows[user]
    }

    pub fn item_row(&self, item: usize) -> &SparseVector {
        &self.rows[self.num_users + item]
    }

    pub fn item_rows(&self) -> &[SparseVector] {
        &self.rows[self.num_users..]
    }

    /// Writes `row_kind \t dense_id \t feature_id \t value`, preceded by a
    /// shape header. Values use shortest round-trip formatting.
    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(
            out,
            "# users={} items={} features={}",
            self.num_users, self.num_items, self.dim
        )?;
        for (row, v) in self.rows.iter().enumerate() {
            let (kind, id) = if row < self.num_users {
                ("user", row)
            } else {
                ("item", row - self.num_users)
            };
            for (f, value) in v.iter() {
                writeln!(out, "{kind}\t{id}\t{f}\t{value:?}")?;
            }
        }
        Ok(())
    }

    pub fn read_tsv<R: BufRead>(input: R, source_name: &str) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line.map_err(|e| Error::parse(source_name, 1, e.to_string()))?,
            None => return Err(Error::parse(source_name, 1, "missing shape header")),
        };
        let mut shape = [None; 3];
        for token in header.trim_start_matches('#').split_whitespace() {
            let (key, value) = token
                .split_once('=')
                .ok_or_else(|| Error::parse(source_name, 1, "malformed shape header"))?;
            let slot = match key {
                "users" => 0,
                "items" => 1,
                "features" => 2,
                _ => return Err(Error::parse(source_name, 1, format!("unknown header key `{key}`"))),
            };
            shape[slot] = Some(
                value
                    .parse::<usize>()
                    .map_err(|_| Error::parse(source_name, 1, "malformed shape header"))?,
            );
        }
        let [Some(num_users), Some(num_items), Some(dim)] = shape else {
            return Err(Error::parse(source_name, 1, "incomplete shape header"));
        };

        let mut pairs: Vec<Vec<(usize, f64)>> = vec![Vec::new(); num_users + num_items];
        for (idx, line) in lines {
            let lineno = idx + 1;
            let line = line.map_err(|e| Error::parse(source_name, lineno, e.to_string()))?;
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split('\t').collect();
            let bad = || Error::parse(source_name, lineno, "expected `kind \\t id \\t feature \\t value`");
            if fields.len() != 4 {
                return Err(bad());
            }
            let id: usize = fields[1].parse().map_err(|_| bad())?;
            let row = match fields[0] {
                "user" if id < num_users => id,
                "item" if id < num_items => num_users + id,
                _ => return Err(Error::parse(source_name, lineno, "row kind or id out of range")),
            };
            let f: usize = fields[2].parse().map_err(|_| bad())?;
            let v: f64 = fields[3].parse().map_err(|_| bad())?;
            pairs[row].push((f, v));
        }
        let rows = pairs
            .into_iter()
            .map(|p| SparseVector::from_pairs(dim, p))
            .collect::<Result<Vec<_>>>()?;
        ProfileMatrix::from_rows(num_users, num_items, dim, rows)
    }
}

/// Item rows from the full catalog, then user rows averaged over each user's
/// enjoyed training items.
pub fn build_profile_matrix(
    train: &Dataset,
    store: &FeatureStore,
    features: &FeatureSet,
    enjoyed: EnjoyedItems,
) -> Result<ProfileMatrix> {
    if store.num_items() != train.num_items() {
        return Err(Error::DimensionMismatch {
            left: store.num_items(),
            right: train.num_items(),
        });
    }
    let items = item_vectors(store, features)?;
    let mut by_user = vec![Vec::new(); train.num_users()];
    for x in train.interactions() {
        let keep = match (enjoyed, x.rating) {
            (EnjoyedItems::MinRating(t), Some(r)) => r >= t,
            _ => true,
        };
        if keep {
            by_user[x.user].push(x.item);
        }
    }
    let dim = features.len();
    let users = by_user
        .par_iter_mut()
        .map(|list| {
            list.sort_unstable();
            user_profile(&items, list, dim)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut rows = users;
    rows.extend(items);
    ProfileMatrix::from_rows(train.num_users(), train.num_items(), dim, rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::parse_interactions;
    use crate::model::Feature;
    use std::collections::BTreeSet;

    fn f(name: &str) -> Feature {
        Feature::new("p", name).unwrap()
    }

    fn store_of(items: &[&[&str]]) -> FeatureStore {
        FeatureStore::from_item_features(
            items
                .iter()
                .map(|names| names.iter().map(|n| f(n)).collect::<BTreeSet<_>>())
                .collect(),
        )
    }

    #[test]
    fn tfidf_hand_example() {
        // |I| = 4, item 0 carries f1 (df 1) and f2 (df 4)
        let store = store_of(&[&["f1", "f2"], &["f2"], &["f2"], &["f2"]]);
        let features = FeatureSet::from_features(store.counts().keys().cloned());
        let v = tfidf_item_vector(0, &store, &features, 4).unwrap();
        let id1 = features.id(&f("f1")).unwrap();
        let id2 = features.id(&f("f2")).unwrap();
        assert!((v.value(id1) - 0.980_258_143_468_547).abs() < 1e-12);
        assert_eq!(v.value(id2), 0.0);
        assert_eq!(v.nnz(), 1);
    }

    #[test]
    fn tfidf_featureless_item() {
        let store = store_of(&[&["a"], &[]]);
        let features = FeatureSet::from_features(store.counts().keys().cloned());
        assert!(tfidf_item_vector(1, &store, &features, 2).unwrap().is_zero());
    }

    #[test]
    fn tfidf_ignores_unretained_features() {
        let store = store_of(&[&["a", "b"], &["b"]]);
        let features = FeatureSet::from_features([f("a")]);
        let v = tfidf_item_vector(0, &store, &features, 2).unwrap();
        // only `a` counts towards the TF normalizer
        assert!((v.value(0) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn user_profile_averages_carriers() {
        let items = vec![
            SparseVector::from_pairs(2, [(0, 0.98)]).unwrap(),
            SparseVector::from_pairs(2, [(0, 0.5), (1, 0.2)]).unwrap(),
        ];
        let u = user_profile(&items, &[0, 1], 2).unwrap();
        assert!((u.value(0) - 0.74).abs() < 1e-12);
        assert!((u.value(1) - 0.2).abs() < 1e-15);
        assert_eq!(user_profile(&items, &[0], 2).unwrap(), items[0]);
        assert!(user_profile(&items, &[], 2).unwrap().is_zero());
    }

    #[test]
    fn profile_matrix_layout_and_hand_check() {
        // one user who rated all three items, each item with one unique feature
        let ds = parse_interactions("u\ta\nu\tb\nu\tc\nw\ta\n".as_bytes(), "t").unwrap();
        let store = store_of(&[&["x"], &["y"], &["z"]]);
        let features = FeatureSet::from_features(store.counts().keys().cloned());
        let m = build_profile_matrix(&ds, &store, &features, EnjoyedItems::All).unwrap();
        assert_eq!(m.rows().len(), 5);
        let ln3 = 3f64.ln();
        for item in 0..3 {
            assert!((m.item_row(item).value(item) - ln3).abs() < 1e-15);
        }
        // each feature has a single carrier, so the average is that carrier's value
        for feat in 0..3 {
            assert!((m.user_row(0).value(feat) - ln3).abs() < 1e-15);
        }
        assert_eq!(m.user_row(1), m.item_row(0));
    }

    #[test]
    fn thresholded_profiles() {
        let ds = parse_interactions("u\ta\t5\nu\tb\t2\n".as_bytes(), "t").unwrap();
        let store = store_of(&[&["x"], &["y"]]);
        let features = FeatureSet::from_features(store.counts().keys().cloned());
        let m = build_profile_matrix(&ds, &store, &features, EnjoyedItems::MinRating(4.0)).unwrap();
        assert_eq!(m.user_row(0), m.item_row(0));
    }

    #[test]
    fn featureless_catalog_gives_zero_matrix() {
        let ds = parse_interactions("u\ta\nv\tb\n".as_bytes(), "t").unwrap();
        let store = store_of(&[&[], &[]]);
        let features = FeatureSet::default();
        let m = build_profile_matrix(&ds, &store, &features, EnjoyedItems::All).unwrap();
        assert!(m.rows().iter().all(SparseVector::is_zero));
    }

    #[test]
    fn tsv_round_trip_is_bit_exact() {
        let rows = vec![
            SparseVector::from_pairs(3, [(0, 0.1 + 0.2), (2, 1e-300)]).unwrap(),
            SparseVector::zeros(3),
            SparseVector::from_pairs(3, [(1, std::f64::consts::PI)]).unwrap(),
        ];
        let m = ProfileMatrix::from_rows(1, 2, 3, rows).unwrap();
        let mut buf = Vec::new();
        m.write_tsv(&mut buf).unwrap();
        let back = ProfileMatrix::read_tsv(buf.as_slice(), "mem").unwrap();
        assert_eq!(back, m);
    }
}
