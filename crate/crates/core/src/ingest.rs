//! Loading interaction logs and item knowledge-graph features from local files,
//! then narrowing the features down to the retained set `F`.
//!
//! Interaction TSV: `user \t item [\t rating [\t timestamp]]`, `#` comments.
//! Triples come either as TSV (`item \t predicate \t object`) or as a subset
//! of N-Triples (`<s> <p> <o> .` and `<s> <p> "literal" .`), optionally joined
//! to items through an `item \t iri` mapping file.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use log::warn;

use crate::error::{Error, Result};
use crate::model::{Dataset, Feature, FeatureSet, IdMap, Interaction};

pub const RDF_TYPE: &str = "http://www.w3.org/1999/02/22-rdf-syntax-ns#type";
pub const DCT_SUBJECT: &str = "http://purl.org/dc/terms/subject";

/// Predicates dropped before any setting is selected.
pub const NOISY_PREDICATES: [&str; 5] = [
    "http://www.w3.org/2002/07/owl#sameAs",
    "http://dbpedia.org/ontology/thumbnail",
    "http://xmlns.com/foaf/0.1/depiction",
    "http://www.w3.org/ns/prov#wasDerivedFrom",
    "http://xmlns.com/foaf/0.1/isPrimaryTopicOf",
];

/// CURIE prefix expansions. Predicates are always compared as full IRIs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PrefixTable {
    entries: Vec<(String, String)>,
}

impl Default for PrefixTable {
    fn default() -> Self {
        let entries = [
            ("dct", "http://purl.org/dc/terms/"),
            ("dcterms", "http://purl.org/dc/terms/"),
            ("rdf", "http://www.w3.org/1999/02/22-rdf-syntax-ns#"),
            ("rdfs", "http://www.w3.org/2000/01/rdf-schema#"),
            ("owl", "http://www.w3.org/2002/07/owl#"),
            ("dbo", "http://dbpedia.org/ontology/"),
            ("dbc", "http://dbpedia.org/resource/Category:"),
            ("dbr", "http://dbpedia.org/resource/"),
            ("foaf", "http://xmlns.com/foaf/0.1/"),
            ("prov", "http://www.w3.org/ns/prov#"),
        ];
        PrefixTable {
            entries: entries
                .iter()
                .map(|(p, iri)| (p.to_string(), iri.to_string()))
                .collect(),
        }
    }
}

impl PrefixTable {
    pub fn empty() -> Self {
        PrefixTable { entries: Vec::new() }
    }

    /// Adds or replaces a prefix.
    pub fn insert(&mut self, prefix: &str, iri: &str) {
        self.entries.retain(|(p, _)| p != prefix);
        self.entries.push((prefix.to_owned(), iri.to_owned()));
    }

    /// `<iri>` → `iri`; `prefix:local` with a known prefix → expanded IRI;
    /// anything else unchanged.
    pub fn expand(&self, term: &str) -> String {
        if let Some(inner) = term.strip_prefix('<').and_then(|t| t.strip_suffix('>')) {
            return inner.to_owned();
        }
        if let Some((prefix, local)) = term.split_once(':') {
            if !local.starts_with("//") {
                if let Some((_, iri)) = self.entries.iter().find(|(p, _)| p == prefix) {
                    return format!("{iri}{local}");
                }
            }
        }
        term.to_owned()
    }

    /// Shortest CURIE form for display; the first declared prefix wins among
    /// equal-length matches.
    pub fn compact(&self, iri: &str) -> String {
        let best = self
            .entries
            .iter()
            .filter(|(_, base)| iri.starts_with(base.as_str()) && iri.len() > base.len())
            .max_by(|a, b| a.1.len().cmp(&b.1.len()).then(b.0.len().cmp(&a.0.len())));
        match best {
            Some((prefix, base)) => format!("{prefix}:{}", &iri[base.len()..]),
            None => iri.to_owned(),
        }
    }
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Error::io(path, e))
}

/// Loads an interaction TSV. Dense ids follow first-seen order; for a repeated
/// `(user, item)` pair the last line wins.
pub fn load_interactions(path: &Path) -> Result<Dataset> {
    parse_interactions(open(path)?, &path.display().to_string())
}

pub fn parse_interactions<R: BufRead>(reader: R, source_name: &str) -> Result<Dataset> {
    let mut users = IdMap::new();
    let mut items = IdMap::new();
    let mut interactions: Vec<Interaction> = Vec::new();
    let mut position: HashMap<(usize, usize), usize> = HashMap::new();
    let mut explicit: Option<bool> = None;

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::parse(source_name, lineno, e.to_string()))?;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if !(2..=4).contains(&fields.len()) {
            return Err(Error::parse(
                source_name,
                lineno,
                format!("expected 2 to 4 tab-separated fields, found {}", fields.len()),
            ));
        }
        let (user_ext, item_ext) = (fields[0].trim(), fields[1].trim());
        if user_ext.is_empty() || item_ext.is_empty() {
            return Err(Error::parse(source_name, lineno, "empty user or item id"));
        }
        let rating = match fields.get(2).map(|s| s.trim()) {
            Some(s) if !s.is_empty() => {
                let r: f64 = s
                    .parse()
                    .map_err(|_| Error::parse(source_name, lineno, format!("invalid rating `{s}`")))?;
                if !(1.0..=5.0).contains(&r) {
                    return Err(Error::parse(source_name, lineno, format!("rating {r} outside [1, 5]")));
                }
                Some(r)
            }
            _ => None,
        };
        let timestamp = match fields.get(3).map(|s| s.trim()) {
            Some(s) if !s.is_empty() => Some(
                s.parse::<i64>()
                    .map_err(|_| Error::parse(source_name, lineno, format!("invalid timestamp `{s}`")))?,
            ),
            _ => None,
        };
        match explicit {
            None => explicit = Some(rating.is_some()),
            Some(e) if e != rating.is_some() => {
                return Err(Error::parse(
                    source_name,
                    lineno,
                    "ratings must be present on every line or on none",
                ))
            }
            _ => {}
        }

        let user = users.intern(user_ext);
        let item = items.intern(item_ext);
        let record = Interaction {
            user,
            item,
            rating,
            timestamp,
        };
        match position.get(&(user, item)) {
            Some(&pos) => interactions[pos] = record,
            None => {
                position.insert((user, item), interactions.len());
                interactions.push(record);
            }
        }
    }

    if interactions.is_empty() {
        return Err(Error::parse(source_name, 0, "no interactions found"));
    }
    Dataset::new(Arc::new(users), Arc::new(items), interactions)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TripleFormat {
    Tsv,
    NTriples,
}

impl FromStr for TripleFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tsv" | "tsv-triples" => Ok(TripleFormat::Tsv),
            "nt" | "ntriples" | "ntriples-subset" => Ok(TripleFormat::NTriples),
            other => Err(Error::Config(format!("unknown triples format `{other}`"))),
        }
    }
}

impl fmt::Display for TripleFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TripleFormat::Tsv => "tsv",
            TripleFormat::NTriples => "ntriples",
        })
    }
}

/// Reads `item_id \t item_iri` lines into an IRI → item-id lookup.
pub fn load_item_mapping(path: &Path, prefixes: &PrefixTable) -> Result<HashMap<String, String>> {
    let name = path.display().to_string();
    let mut map = HashMap::new();
    for (idx, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(&name, idx + 1, e.to_string()))?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((item, iri)) = line.split_once('\t') else {
            return Err(Error::parse(&name, idx + 1, "expected `item_id \\t item_iri`"));
        };
        map.insert(prefixes.expand(iri.trim()), item.trim().to_owned());
    }
    Ok(map)
}

/// Item descriptions: the feature set of every catalog item, plus how many
/// items carry each feature.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureStore {
    item_features: Vec<BTreeSet<Feature>>,
    feature_item_count: BTreeMap<Feature, usize>,
    skipped: usize,
}

impl FeatureStore {
    /// One entry per catalog item, indexed by dense item id.
    pub fn from_item_features(item_features: Vec<BTreeSet<Feature>>) -> Self {
        let mut feature_item_count = BTreeMap::new();
        for features in &item_features {
            for f in features {
                *feature_item_count.entry(f.clone()).or_insert(0) += 1;
            }
        }
        FeatureStore {
            item_features,
            feature_item_count,
            skipped: 0,
        }
    }

    pub fn num_items(&self) -> usize {
        self.item_features.len()
    }

    pub fn item_features(&self, item: usize) -> &BTreeSet<Feature> {
        &self.item_features[item]
    }

    pub fn items(&self) -> impl Iterator<Item = (usize, &BTreeSet<Feature>)> {
        self.item_features.iter().enumerate()
    }

    pub fn feature_item_count(&self, feature: &Feature) -> usize {
        self.feature_item_count.get(feature).copied().unwrap_or(0)
    }

    pub fn counts(&self) -> &BTreeMap<Feature, usize> {
        &self.feature_item_count
    }

    /// Distinct features over the whole store.
    pub fn num_features(&self) -> usize {
        self.feature_item_count.len()
    }

    /// Total `(item, feature)` assignments.
    pub fn num_assignments(&self) -> usize {
        self.item_features.iter().map(BTreeSet::len).sum()
    }

    /// Records whose item could not be resolved against the catalog.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    fn retain(&self, keep: impl Fn(&Feature) -> bool) -> FeatureStore {
        let item_features = self
            .item_features
            .iter()
            .map(|fs| fs.iter().filter(|f| keep(f)).cloned().collect())
            .collect();
        let mut out = FeatureStore::from_item_features(item_features);
        out.skipped = self.skipped;
        out
    }

    /// Dense feature ids of each item's features that belong to `features`.
    pub fn ground_truth(&self, features: &FeatureSet) -> Vec<Vec<usize>> {
        self.item_features
            .iter()
            .map(|fs| {
                let mut ids: Vec<usize> = fs.iter().filter_map(|f| features.id(f)).collect();
                ids.sort_unstable();
                ids
            })
            .collect()
    }
}

pub struct TripleSource<'a> {
    pub format: TripleFormat,
    pub prefixes: &'a PrefixTable,
    /// IRI → external item id, from the mapping file.
    pub mapping: Option<&'a HashMap<String, String>>,
}

pub fn load_triples(path: &Path, source: &TripleSource<'_>, catalog: &IdMap) -> Result<FeatureStore> {
    parse_triples(open(path)?, &path.display().to_string(), source, catalog)
}

pub fn parse_triples<R: BufRead>(
    reader: R,
    source_name: &str,
    source: &TripleSource<'_>,
    catalog: &IdMap,
) -> Result<FeatureStore> {
    let mut item_features = vec![BTreeSet::new(); catalog.len()];
    let mut skipped = 0usize;

    let resolve = |subject: &str| -> Option<usize> {
        catalog.dense(subject).or_else(|| {
            source
                .mapping
                .and_then(|m| m.get(subject))
                .and_then(|ext| catalog.dense(ext))
        })
    };

    for (idx, line) in reader.lines().enumerate() {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::parse(source_name, lineno, e.to_string()))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (subject, predicate, object) = match source.format {
            TripleFormat::Tsv => {
                let fields: Vec<&str> = line.trim_end_matches('\r').split('\t').collect();
                if fields.len() != 3 || fields.iter().any(|f| f.trim().is_empty()) {
                    return Err(Error::parse(
                        source_name,
                        lineno,
                        "expected `item \\t predicate \\t object`",
                    ));
                }
                let subject = fields[0].trim();
                let subject = if subject.starts_with('<') {
                    source.prefixes.expand(subject)
                } else {
                    subject.to_owned()
                };
                (
                    subject,
                    source.prefixes.expand(fields[1].trim()),
                    expand_object(fields[2].trim(), source.prefixes),
                )
            }
            TripleFormat::NTriples => {
                parse_ntriples_line(trimmed).map_err(|msg| Error::parse(source_name, lineno, msg))?
            }
        };
        match resolve(&subject) {
            Some(item) => {
                item_features[item].insert(Feature { predicate, object });
            }
            None => skipped += 1,
        }
    }

    if skipped > 0 {
        warn!("{source_name}: skipped {skipped} triples for items outside the catalog");
    }
    let mut store = FeatureStore::from_item_features(item_features);
    store.skipped = skipped;
    Ok(store)
}

fn expand_object(term: &str, prefixes: &PrefixTable) -> String {
    if term.starts_with('"') {
        term.to_owned()
    } else {
        prefixes.expand(term)
    }
}

/// Parses one N-Triples line into `(subject, predicate, object)`. IRIs are
/// returned without angle brackets; literals keep their quoted lexical form
/// with any language tag or datatype.
fn parse_ntriples_line(line: &str) -> std::result::Result<(String, String, String), String> {
    let mut rest = line;
    let subject = take_iri(&mut rest, "subject")?;
    let predicate = take_iri(&mut rest, "predicate")?;
    rest = rest.trim_start();
    let object = if rest.starts_with('<') {
        take_iri(&mut rest, "object")?
    } else if rest.starts_with('"') {
        take_literal(&mut rest)?
    } else if rest.starts_with("_:") {
        return Err("blank nodes are not supported".into());
    } else {
        return Err("object must be an IRI or a literal".into());
    };
    let tail = rest.trim_start();
    let Some(after_dot) = tail.strip_prefix('.') else {
        return Err("missing terminating `.`".into());
    };
    let after_dot = after_dot.trim_start();
    if !after_dot.is_empty() && !after_dot.starts_with('#') {
        return Err(format!("unexpected trailing content `{after_dot}`"));
    }
    Ok((subject, predicate, object))
}

fn take_iri(rest: &mut &str, role: &str) -> std::result::Result<String, String> {
    let s = rest.trim_start();
    if s.starts_with("_:") {
        return Err("blank nodes are not supported".into());
    }
    let Some(body) = s.strip_prefix('<') else {
        return Err(format!("{role} must be an IRI in angle brackets"));
    };
    let Some(end) = body.find('>') else {
        return Err(format!("unterminated {role} IRI"));
    };
    let iri = &body[..end];
    if iri.is_empty() || iri.contains(char::is_whitespace) {
        return Err(format!("invalid {role} IRI `{iri}`"));
    }
    *rest = &body[end + 1..];
    Ok(iri.to_owned())
}

fn take_literal(rest: &mut &str) -> std::result::Result<String, String> {
    let s = rest.trim_start();
    let bytes = s.as_bytes();
    let mut i = 1;
    let mut closed = None;
    while i < bytes.len() {
        match bytes[i] {
            b'\\' => i += 2,
            b'"' => {
                closed = Some(i);
                break;
            }
            _ => i += 1,
        }
    }
    let Some(close) = closed else {
        return Err("unterminated literal".into());
    };
    let mut end = close + 1;
    let suffix = &s[end..];
    if let Some(lang) = suffix.strip_prefix('@') {
        let len = lang
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '-'))
            .unwrap_or(lang.len());
        if len == 0 {
            return Err("empty language tag".into());
        }
        end += 1 + len;
    } else if let Some(dt) = suffix.strip_prefix("^^<") {
        let Some(close_dt) = dt.find('>') else {
            return Err("unterminated datatype IRI".into());
        };
        end += 3 + close_dt + 1;
    }
    let literal = s[..end].to_owned();
    *rest = &s[end..];
    Ok(literal)
}

/// Removes features whose predicate is on the noisy list.
pub fn exclude_noisy(store: &FeatureStore) -> FeatureStore {
    store.retain(|f| !NOISY_PREDICATES.contains(&f.predicate.as_str()))
}

/// Feature families: categorical (`dct:subject`), ontological (`rdf:type`)
/// and factual (every other predicate).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SettingKind {
    Categorical,
    Ontological,
    Factual,
}

impl SettingKind {
    pub fn accepts(self, predicate: &str) -> bool {
        match self {
            SettingKind::Categorical => predicate == DCT_SUBJECT,
            SettingKind::Ontological => predicate == RDF_TYPE,
            SettingKind::Factual => predicate != DCT_SUBJECT && predicate != RDF_TYPE,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            SettingKind::Categorical => "cs",
            SettingKind::Ontological => "os",
            SettingKind::Factual => "fs",
        }
    }
}

impl FromStr for SettingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cs" | "categorical" => Ok(SettingKind::Categorical),
            "os" | "ontological" => Ok(SettingKind::Ontological),
            "fs" | "factual" => Ok(SettingKind::Factual),
            other => Err(Error::Config(format!("unknown setting `{other}` (cs, os, fs)"))),
        }
    }
}

impl fmt::Display for SettingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

pub fn select_setting(store: &FeatureStore, setting: SettingKind) -> FeatureStore {
    store.retain(|f| setting.accepts(&f.predicate))
}

/// Keeps a feature when the share of catalog items lacking it is at most
/// `threshold_percent`. Surviving features get ids in `(predicate, object)` order.
pub fn filter_by_missing(store: &FeatureStore, threshold_percent: f64, catalog_size: usize) -> Result<FeatureSet> {
    if !(0.0..=100.0).contains(&threshold_percent) {
        return Err(Error::InvalidArgument(format!(
            "missing-value threshold {threshold_percent} outside [0, 100]"
        )));
    }
    if catalog_size == 0 {
        return Err(Error::InvalidArgument("empty catalog".into()));
    }
    let kept = store.counts().iter().filter_map(|(f, &count)| {
        let missing = catalog_size.saturating_sub(count) as f64 / catalog_size as f64 * 100.0;
        (missing <= threshold_percent).then(|| f.clone())
    });
    // counts() is a BTreeMap, so this is already sorted
    Ok(FeatureSet::from_features(kept))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Stats {
    pub users: usize,
    pub items: usize,
    pub transactions: usize,
    pub features: usize,
    pub sparsity: f64,
}

pub fn dataset_stats(dataset: &Dataset, store: Option<&FeatureStore>) -> Stats {
    let users = dataset.num_users();
    let items = dataset.num_items();
    let transactions = dataset.len();
    let cells = (users * items) as f64;
    let sparsity = if cells > 0.0 {
        100.0 * (1.0 - transactions as f64 / cells)
    } else {
        0.0
    };
    Stats {
        users,
        items,
        transactions,
        features: store.map_or(0, FeatureStore::num_features),
        sparsity,
    }
}

impl fmt::Display for Stats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "users = {}", self.users)?;
        writeln!(f, "items = {}", self.items)?;
        writeln!(f, "transactions = {}", self.transactions)?;
        writeln!(f, "features = {}", self.features)?;
        writeln!(f, "sparsity = {:.2}%", self.sparsity)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn interactions(text: &str) -> Result<Dataset> {
        parse_interactions(text.as_bytes(), "test")
    }

    fn feat(p: &str, o: &str) -> Feature {
        Feature::new(p, o).unwrap()
    }

    fn store(items: Vec<Vec<Feature>>) -> FeatureStore {
        FeatureStore::from_item_features(items.into_iter().map(|v| v.into_iter().collect()).collect())
    }

    #[test]
    fn interactions_basic() {
        let ds = interactions("u1\ti1\nu2\ti2\nu1\ti2\n").unwrap();
        assert_eq!(ds.num_users(), 2);
        assert_eq!(ds.num_items(), 2);
        assert_eq!(ds.len(), 3);
        assert!(!ds.has_ratings());
    }

    #[test]
    fn interaction_field_mapping() {
        let ds = interactions("# header\nu1\ti1\t4.0\t100\n").unwrap();
        let x = ds.interactions()[0];
        assert_eq!(x.rating, Some(4.0));
        assert_eq!(x.timestamp, Some(100));
    }

    #[test]
    fn duplicate_keeps_last() {
        let ds = interactions("u1\ti1\t2\nu1\ti2\t3\nu1\ti1\t5\n").unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.interactions()[0].rating, Some(5.0));
    }

    #[test]
    fn malformed_lines_report_line_number() {
        let err = interactions("u1\ti1\nbroken\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = interactions("u1\ti1\t9\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = interactions("u1\ti1\t4\nu2\ti1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(interactions("# only a comment\n").is_err());
    }

    fn catalog(ids: &[&str]) -> IdMap {
        IdMap::from_external(ids.iter().map(|s| s.to_string()).collect()).unwrap()
    }

    #[test]
    fn tsv_triples_with_prefixes() {
        let prefixes = PrefixTable::default();
        let src = TripleSource {
            format: TripleFormat::Tsv,
            prefixes: &prefixes,
            mapping: None,
        };
        let text = "i1\tdct:subject\tdbc:Space_adventure_films\n\
                    i1\tdct:subject\tdbc:Space_adventure_films\n\
                    i9\tdct:subject\tdbc:Other\n";
        let store = parse_triples(text.as_bytes(), "t", &src, &catalog(&["i1", "i2"])).unwrap();
        let expected = feat(
            DCT_SUBJECT,
            "http://dbpedia.org/resource/Category:Space_adventure_films",
        );
        assert!(store.item_features(0).contains(&expected));
        assert_eq!(store.item_features(0).len(), 1);
        assert_eq!(store.feature_item_count(&expected), 1);
        assert_eq!(store.skipped(), 1);
        assert!(store.item_features(1).is_empty());
    }

    #[test]
    fn ntriples_subset_with_mapping() {
        let prefixes = PrefixTable::default();
        let mut mapping = HashMap::new();
        mapping.insert("http://dbpedia.org/resource/Alien".to_string(), "m7".to_string());
        let src = TripleSource {
            format: TripleFormat::NTriples,
            prefixes: &prefixes,
            mapping: Some(&mapping),
        };
        let text = concat!(
            "<http://dbpedia.org/resource/Alien> <http://purl.org/dc/terms/subject> <http://dbpedia.org/resource/Category:Horror> .\n",
            "<http://dbpedia.org/resource/Alien> <http://dbpedia.org/ontology/runtime> \"117.0\"^^<http://www.w3.org/2001/XMLSchema#double> .\n",
            "<http://dbpedia.org/resource/Alien> <http://www.w3.org/2000/01/rdf-schema#label> \"Alien \\\"1979\\\"\"@en . # trailing\n",
        );
        let store = parse_triples(text.as_bytes(), "t", &src, &catalog(&["m7"])).unwrap();
        let feats = store.item_features(0);
        assert_eq!(feats.len(), 3);
        assert!(feats.contains(&feat(
            "http://dbpedia.org/ontology/runtime",
            "\"117.0\"^^<http://www.w3.org/2001/XMLSchema#double>"
        )));
        assert!(feats.contains(&feat(
            "http://www.w3.org/2000/01/rdf-schema#label",
            "\"Alien \\\"1979\\\"\"@en"
        )));
    }

    #[test]
    fn ntriples_syntax_errors() {
        let prefixes = PrefixTable::default();
        let src = TripleSource {
            format: TripleFormat::NTriples,
            prefixes: &prefixes,
            mapping: None,
        };
        for bad in [
            "<a> <b> <c>\n",
            "_:x <b> <c> .\n",
            "<a> <b> \"open .\n",
            "<a> b <c> .\n",
        ] {
            let text = format!("<a> <b> <c> .\n{bad}");
            let err = parse_triples(text.as_bytes(), "t", &src, &catalog(&["a"])).unwrap_err();
            assert!(matches!(err, Error::Parse { line: 2, .. }), "{bad}: {err}");
        }
    }

    #[test]
    fn noisy_exclusion() {
        let s = store(vec![
            vec![feat(NOISY_PREDICATES[0], "x"), feat(DCT_SUBJECT, "a")],
            vec![feat(NOISY_PREDICATES[2], "y")],
        ]);
        let clean = exclude_noisy(&s);
        assert_eq!(clean.item_features(0).len(), 1);
        assert!(clean.item_features(1).is_empty());
        assert_eq!(clean.num_items(), 2);
        assert_eq!(exclude_noisy(&clean), clean);
    }

    #[test]
    fn settings_partition() {
        let director = "http://dbpedia.org/ontology/director";
        let s = store(vec![vec![
            feat(DCT_SUBJECT, "a"),
            feat(RDF_TYPE, "b"),
            feat(director, "c"),
        ]]);
        let cs = select_setting(&s, SettingKind::Categorical);
        assert_eq!(cs.num_features(), 1);
        assert!(cs.item_features(0).iter().all(|f| f.predicate == DCT_SUBJECT));
        let fs = select_setting(
            &store(vec![vec![feat(DCT_SUBJECT, "a"), feat(director, "c")]]),
            SettingKind::Factual,
        );
        assert_eq!(fs.item_features(0).iter().next().unwrap().predicate, director);
        let os = select_setting(&store(vec![vec![feat(DCT_SUBJECT, "a")]]), SettingKind::Ontological);
        assert_eq!(os.num_features(), 0);
        let total = cs.num_features()
            + select_setting(&s, SettingKind::Ontological).num_features()
            + select_setting(&s, SettingKind::Factual).num_features();
        assert_eq!(total, s.num_features());
    }

    #[test]
    fn missing_value_filter() {
        let rare = feat(DCT_SUBJECT, "rare");
        let common = feat(DCT_SUBJECT, "common");
        let mut items = vec![BTreeSet::new(); 1000];
        for (i, set) in items.iter_mut().enumerate() {
            if i < 3 {
                set.insert(rare.clone());
            }
            if i < 5 {
                set.insert(common.clone());
            }
        }
        let s = FeatureStore::from_item_features(items);
        let f = filter_by_missing(&s, 99.6, 1000).unwrap();
        assert!(!f.contains(&rare));
        assert!(f.contains(&common));
        assert_eq!(filter_by_missing(&s, 100.0, 1000).unwrap().len(), 2);
        assert!(filter_by_missing(&s, 100.5, 1000).is_err());
        assert!(filter_by_missing(&s, -1.0, 1000).is_err());
    }

    #[test]
    fn stats_sparsity() {
        let ds = interactions("a\tx\na\ty\nb\tx\nb\ty\n").unwrap();
        assert_eq!(dataset_stats(&ds, None).sparsity, 0.0);
        let sparsity = |u: usize, i: usize, t: usize| 100.0 * (1.0 - t as f64 / (u * i) as f64);
        assert_eq!(format!("{:.2}", sparsity(4000, 2626, 69846)), "99.34");
        assert_eq!(format!("{:.2}", sparsity(32143, 3901, 689561)), "99.45");
    }

    #[test]
    fn prefix_expand_and_compact() {
        let p = PrefixTable::default();
        assert_eq!(p.expand("dct:subject"), DCT_SUBJECT);
        assert_eq!(p.expand("<http://x/y>"), "http://x/y");
        assert_eq!(p.expand("http://x/y"), "http://x/y");
        assert_eq!(p.expand("unknown:thing"), "unknown:thing");
        assert_eq!(p.compact(DCT_SUBJECT), "dct:subject");
        assert_eq!(
            p.compact("http://dbpedia.org/resource/Category:Space_adventure_films"),
            "dbc:Space_adventure_films"
        );
    }

    #[test]
    fn filter_is_monotone_in_threshold() {
        let mut items = vec![BTreeSet::new(); 20];
        for (i, set) in items.iter_mut().enumerate() {
            for k in 0..(i % 7) {
                set.insert(feat(DCT_SUBJECT, &format!("f{k}")));
            }
        }
        let s = FeatureStore::from_item_features(items);
        let mut prev = usize::MAX;
        for t in [100.0, 90.0, 80.0, 70.0, 50.0, 10.0, 0.0] {
            let n = filter_by_missing(&s, t, 20).unwrap().len();
            assert!(n <= prev);
            prev = n;
        }
    }
}
