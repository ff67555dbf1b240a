//! End-to-end commands over files: each reads its declared inputs, writes its
//! declared outputs, and returns a short summary for the terminal.
//!
//! `prepare` writes a directory that every later command reads:
//!
//! | file | contents |
//! |---|---|
//! | `features.tsv` | `id \t predicate \t object` for the retained features |
//! | `item_features.tsv` | `item \t feature_id`, the original retained features per item |
//! | `users.tsv`, `items.tsv` | external ids in dense order |
//! | `train.tsv`, `test.tsv` | the hold-out split as interaction lines |
//! | `profiles.tsv` | TF-IDF user and item rows |
//! | `stats.txt` | dataset statistics |
//! | `prepare.cfg` | the configuration the directory was built with |

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;

use crate::bpr::{self, EpochTrace};
use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::eval::{compare_reports, evaluate_run, holdout_split, render_comparison, EvalReport};
use crate::fm::FmParams;
use crate::ingest::{
    dataset_stats, exclude_noisy, filter_by_missing, load_interactions, load_item_mapping, load_triples,
    select_setting, FeatureStore, PrefixTable, TripleSource,
};
use crate::interpret::{self, ItemGroundTruth};
use crate::model::{Dataset, Feature, FeatureSet, IdMap, Interaction};
use crate::persist::{load_model, save_model, ModelMeta};
use crate::profiles::{build_profile_matrix, ProfileMatrix};
use crate::registry::{kahfm_recommender, recommend_all, train_kahfm, FitContext, SystemRegistry};

/// Keys fixed once a prepared directory exists.
const DATA_KEYS: [&str; 5] = ["run.seed", "data.", "features.", "split.ratio", "split.mode"];
/// Keys additionally fixed once a model is trained.
const MODEL_KEYS: [&str; 1] = ["train."];

/// Applies `section.key = value` overrides on top of `base`, refusing to
/// change any key that starts with one of `locked`.
pub fn apply_overrides(base: &RunConfig, locked: &[&str], overrides: &[(String, String)]) -> Result<RunConfig> {
    let original = base.entries();
    let mut cfg = base.clone();
    for (key, value) in overrides {
        cfg.set(key, value)?;
        if locked.iter().any(|p| key.starts_with(p)) && cfg.entries().get(key) != original.get(key) {
            return Err(Error::Config(format!(
                "`{key}` is fixed at `{}` by an earlier stage; re-run that stage to change it",
                original.get(key).map_or("", String::as_str)
            )));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_file(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn require<'a>(p: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("`{key}` is not set")))
}

/// Interactions, triples and the retained feature set for a configuration.
pub struct Corpus {
    pub data: Dataset,
    pub store: FeatureStore,
    pub features: FeatureSet,
}

pub fn load_corpus(cfg: &RunConfig) -> Result<Corpus> {
    let data = load_interactions(require(&cfg.interactions, "data.interactions")?)?;
    let prefixes = PrefixTable::default();
    let mapping = match &cfg.mapping {
        Some(p) => Some(load_item_mapping(p, &prefixes)?),
        None => None,
    };
    let source = TripleSource {
        format: cfg.triple_format,
        prefixes: &prefixes,
        mapping: mapping.as_ref(),
    };
    let raw = load_triples(require(&cfg.triples, "data.triples")?, &source, data.items())?;
    let cleaned = if cfg.exclude_noisy { exclude_noisy(&raw) } else { raw };
    let store = select_setting(&cleaned, cfg.setting);
    let features = filter_by_missing(&store, cfg.threshold, data.num_items())?;
    info!(
        "{} users, {} items, {} interactions, {} retained {} features",
        data.num_users(),
        data.num_items(),
        data.len(),
        features.len(),
        cfg.setting
    );
    Ok(Corpus { data, store, features })
}

fn stats_text(corpus: &Corpus) -> String {
    let mut stats = dataset_stats(&corpus.data, Some(&corpus.store));
    stats.features = corpus.features.len();
    format!("{stats}skipped_triples = {}\n", corpus.store.skipped())
}

/// Dataset statistics after feature selection and filtering.
pub fn stats(cfg: &RunConfig) -> Result<String> {
    Ok(stats_text(&load_corpus(cfg)?))
}

fn interaction_lines(data: &Dataset) -> String {
    let mut s = String::new();
    for x in data.interactions() {
        let u = data.users().external(x.user).expect("dense user id");
        let i = data.items().external(x.item).expect("dense item id");
        let _ = write!(s, "{u}\t{i}");
        match (x.rating, x.timestamp) {
            (Some(r), Some(t)) => {
                let _ = write!(s, "\t{r}\t{t}");
            }
            (Some(r), None) => {
                let _ = write!(s, "\t{r}");
            }
            (None, Some(t)) => {
                let _ = write!(s, "\t\t{t}");
            }
            (None, None) => {}
        }
        s.push('\n');
    }
    s
}

fn id_lines(map: &IdMap) -> String {
    map.externals().iter().map(|e| format!("{e}\n")).collect()
}

/// Ingest, select, filter, split and build profiles into `out`.
pub fn prepare(cfg: &RunConfig, out: &Path) -> Result<String> {
    let corpus = load_corpus(cfg)?;
    if corpus.features.is_empty() {
        return Err(Error::Config(format!(
            "no {} feature survives the {}% missing-value threshold",
            cfg.setting, cfg.threshold
        )));
    }
    let (train, test) = holdout_split(&corpus.data, &cfg.split())?;
    let profiles = build_profile_matrix(&train, &corpus.store, &corpus.features, cfg.enjoyed())?;
    create_dir(out)?;

    let mut features = String::from("id\tpredicate\tobject\n");
    for (id, f) in corpus.features.iter().enumerate() {
        let _ = writeln!(features, "{id}\t{}\t{}", f.predicate, f.object);
    }
    write_file(&out.join("features.tsv"), &features)?;

    let mut item_features = String::from("item\tfeature\n");
    for (item, ids) in corpus.store.ground_truth(&corpus.features).iter().enumerate() {
        let name = corpus.data.items().external(item).expect("dense item id");
        for f in ids {
            let _ = writeln!(item_features, "{name}\t{f}");
        }
    }
    write_file(&out.join("item_features.tsv"), &item_features)?;
    write_file(&out.join("users.tsv"), &id_lines(corpus.data.users()))?;
    write_file(&out.join("items.tsv"), &id_lines(corpus.data.items()))?;
    write_file(&out.join("train.tsv"), &interaction_lines(&train))?;
    write_file(&out.join("test.tsv"), &interaction_lines(&test))?;
    let path = out.join("profiles.tsv");
    let mut w = BufWriter::new(File::create(&path).map_err(|e| Error::io(&path, e))?);
    profiles
        .write_tsv(&mut w)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(&path, e))?;
    let stats = stats_text(&corpus);
    write_file(&out.join("stats.txt"), &stats)?;
    write_file(&out.join("prepare.cfg"), &cfg.to_text())?;
    Ok(format!(
        "{stats}train = {}\ntest = {}\nprepared = {}\n",
        train.len(),
        test.len(),
        out.display()
    ))
}

/// The contents of a prepared directory.
pub struct Prepared {
    pub config: RunConfig,
    pub features: FeatureSet,
    pub train: Dataset,
    pub test: Dataset,
    pub truth: ItemGroundTruth,
    pub profiles: ProfileMatrix,
}

fn read_ids(path: &Path) -> Result<IdMap> {
    IdMap::from_external(read_file(path)?.lines().map(str::to_owned).collect())
}

fn read_split(path: &Path, users: &Arc<IdMap>, items: &Arc<IdMap>) -> Result<Dataset> {
    let name = path.display().to_string();
    let mut out = Vec::new();
    let reader = BufReader::new(File::open(path).map_err(|e| Error::io(path, e))?);
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.is_empty() {
            continue;
        }
        let lineno = idx + 1;
        let f: Vec<&str> = line.split('\t').collect();
        if !(2..=4).contains(&f.len()) {
            return Err(Error::parse(&name, lineno, "expected 2 to 4 fields"));
        }
        let lookup = |map: &IdMap, s: &str, kind: &'static str| {
            map.dense(s).ok_or_else(|| Error::Unknown { kind, id: s.to_owned() })
        };
        let num = |s: Option<&&str>| s.filter(|s| !s.is_empty()).map(|s| s.to_string());
        out.push(Interaction {
            user: lookup(users, f[0], "user")?,
            item: lookup(items, f[1], "item")?,
            rating: num(f.get(2))
                .map(|s| s.parse().map_err(|_| Error::parse(&name, lineno, "bad rating")))
                .transpose()?,
            timestamp: num(f.get(3))
                .map(|s| s.parse().map_err(|_| Error::parse(&name, lineno, "bad timestamp")))
                .transpose()?,
        });
    }
    Dataset::new(users.clone(), items.clone(), out)
}

impl Prepared {
    pub fn load(dir: &Path) -> Result<Self> {
        let cfg_path = dir.join("prepare.cfg");
        let mut config = RunConfig::default();
        config.apply_text(&read_file(&cfg_path)?, &cfg_path.display().to_string(), None)?;

        let path = dir.join("features.tsv");
        let text = read_file(&path)?;
        let name = path.display().to_string();
        let mut features = Vec::new();
        for (idx, line) in text.lines().enumerate().skip(1) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 3 || f[0].parse() != Ok(features.len()) {
                return Err(Error::parse(
                    &name,
                    idx + 1,
                    "expected `id \\t predicate \\t object` in id order",
                ));
            }
            features.push(Feature::new(f[1], f[2])?);
        }
        let features = FeatureSet::from_ordered(features)?;

        let users = Arc::new(read_ids(&dir.join("users.tsv"))?);
        let items = Arc::new(read_ids(&dir.join("items.tsv"))?);
        let train = read_split(&dir.join("train.tsv"), &users, &items)?;
        let test = read_split(&dir.join("test.tsv"), &users, &items)?;

        let path = dir.join("item_features.tsv");
        let name = path.display().to_string();
        let mut sets = vec![Vec::new(); items.len()];
        for (idx, line) in read_file(&path)?.lines().enumerate().skip(1) {
            let bad = || Error::parse(&name, idx + 1, "expected `item \\t feature_id`");
            let (item, f) = line.split_once('\t').ok_or_else(bad)?;
            let item = items.dense(item).ok_or_else(bad)?;
            let f: usize = f.parse().map_err(|_| bad())?;
            if f >= features.len() {
                return Err(bad());
            }
            sets[item].push(f);
        }
        let path = dir.join("profiles.tsv");
        let profiles = ProfileMatrix::read_tsv(
            BufReader::new(File::open(&path).map_err(|e| Error::io(&path, e))?),
            &path.display().to_string(),
        )?;
        if profiles.num_users() != users.len()
            || profiles.num_items() != items.len()
            || profiles.dim() != features.len()
        {
            return Err(Error::Config(format!(
                "{} does not match the prepared id tables",
                path.display()
            )));
        }
        Ok(Prepared {
            config,
            features,
            train,
            test,
            truth: ItemGroundTruth::new(sets),
            profiles,
        })
    }

    pub fn config_with(&self, overrides: &[(String, String)]) -> Result<RunConfig> {
        apply_overrides(&self.config, &DATA_KEYS, overrides)
    }
}

/// Trained feature-aligned parameters and the configuration they came from.
pub struct KahfmModel {
    pub params: FmParams,
    pub config: RunConfig,
    pub trace: Vec<EpochTrace>,
}

fn meta_for(prepared: &Prepared, cfg: &RunConfig) -> ModelMeta {
    ModelMeta {
        features: prepared.features.clone(),
        users: prepared.train.users().clone(),
        items: prepared.train.items().clone(),
        fingerprint: cfg.entries(),
    }
}

/// Loads `model` when given, otherwise trains from the prepared profiles.
pub fn obtain_model(prepared: &Prepared, model: Option<&Path>, overrides: &[(String, String)]) -> Result<KahfmModel> {
    let Some(path) = model else {
        let config = prepared.config_with(overrides)?;
        let (params, trace) = train_kahfm(&prepared.train, &prepared.profiles, &config.hyper())?;
        return Ok(KahfmModel { params, config, trace });
    };
    let (params, meta) = load_model(path)?;
    if meta.features != prepared.features
        || meta.users.externals() != prepared.train.users().externals()
        || meta.items.externals() != prepared.train.items().externals()
    {
        return Err(Error::Config(format!(
            "{} was not trained on this prepared data",
            path.display()
        )));
    }
    let mut stored = RunConfig::default();
    for (k, v) in &meta.fingerprint {
        stored.set(k, v)?;
    }
    let prepared_entries = prepared.config.entries();
    for (k, v) in stored.entries() {
        if DATA_KEYS.iter().any(|p| k.starts_with(p)) && prepared_entries.get(&k) != Some(&v) {
            return Err(Error::Config(format!(
                "{}: `{k}` differs from the prepared data",
                path.display()
            )));
        }
    }
    let locked: Vec<&str> = DATA_KEYS.iter().chain(&MODEL_KEYS).copied().collect();
    let config = apply_overrides(&stored, &locked, overrides)?;
    Ok(KahfmModel {
        params,
        config,
        trace: Vec::new(),
    })
}

/// Feature-aligned init plus BPR; writes `model.bin` and `trace.tsv`.
pub fn train(prepared_dir: &Path, overrides: &[(String, String)], out: &Path) -> Result<String> {
    let prepared = Prepared::load(prepared_dir)?;
    let model = obtain_model(&prepared, None, overrides)?;
    create_dir(out)?;
    save_model(
        &model.params,
        &meta_for(&prepared, &model.config),
        &out.join("model.bin"),
    )?;
    let mut trace = Vec::new();
    bpr::write_trace(&model.trace, &mut trace).map_err(|e| Error::io(out.join("trace.tsv"), e))?;
    write_file(&out.join("trace.tsv"), &String::from_utf8(trace).expect("ASCII trace"))?;
    let last = model
        .trace
        .last()
        .map_or("-".to_owned(), |t| format!("{:.6}", t.mean_loss));
    Ok(format!(
        "epochs = {}\nfinal_loss = {last}\nfactors = {}\nmodel = {}\n",
        model.trace.len(),
        model.params.k(),
        out.join("model.bin").display()
    ))
}

fn build_system(
    prepared: &Prepared,
    model: Option<&Path>,
    overrides: &[(String, String)],
) -> Result<(Box<dyn crate::registry::Recommender>, RunConfig)> {
    let registry = SystemRegistry::builtin();
    let probe = prepared.config_with(overrides)?;
    if !registry.contains(&probe.system) {
        let names: Vec<&str> = registry.names().collect();
        return Err(Error::Config(format!(
            "unknown system `{}` (one of {})",
            probe.system,
            names.join(", ")
        )));
    }
    let (pretrained, config) = if probe.system == "kahfm" {
        let m = obtain_model(prepared, model, overrides)?;
        (Some(m.params), m.config)
    } else {
        (None, probe)
    };
    let settings = config.systems();
    let ctx = FitContext {
        train: &prepared.train,
        profiles: Some(&prepared.profiles),
        settings: &settings,
        pretrained: pretrained.as_ref(),
    };
    Ok((registry.build(&config.system, &ctx)?, config))
}

/// Top-N lists for every user into `recs.tsv`.
pub fn recommend(
    prepared_dir: &Path,
    model: Option<&Path>,
    overrides: &[(String, String)],
    out: &Path,
) -> Result<String> {
    let prepared = Prepared::load(prepared_dir)?;
    let (system, cfg) = build_system(&prepared, model, overrides)?;
    let lists = recommend_all(system.as_ref(), prepared.train.num_users(), cfg.cutoff);
    let mut s = String::from("user\trank\titem\tscore\n");
    for (u, list) in lists.iter().enumerate() {
        let user = prepared.train.users().external(u).expect("dense user id");
        for (rank, (i, score)) in list.iter().enumerate() {
            let item = prepared.train.items().external(*i).expect("dense item id");
            let _ = writeln!(s, "{user}\t{}\t{item}\t{score:?}", rank + 1);
        }
    }
    create_dir(out)?;
    write_file(&out.join("recs.tsv"), &s)?;
    Ok(format!(
        "system = {}\nusers = {}\nrecs = {}\n",
        cfg.system,
        lists.len(),
        out.join("recs.tsv").display()
    ))
}

fn write_report(report: &EvalReport, out: &Path, stem: &str) -> Result<()> {
    create_dir(out)?;
    write_file(&out.join(format!("{stem}.txt")), &report.to_kv())?;
    write_file(&out.join(format!("{stem}.tsv")), &report.to_tsv())
}

fn metrics_text(report: &EvalReport) -> String {
    let show = |v: f64| {
        if v.fract() == 0.0 && v.abs() < 1e15 {
            format!("{v:.0}")
        } else {
            format!("{v:.6}")
        }
    };
    report
        .metrics
        .iter()
        .map(|(k, v)| format!("{k} = {}\n", show(*v)))
        .collect()
}

/// Prec@N and nDCG@N on the test split; writes `report.txt` and `report.tsv`.
pub fn evaluate(
    prepared_dir: &Path,
    model: Option<&Path>,
    overrides: &[(String, String)],
    out: &Path,
) -> Result<String> {
    let prepared = Prepared::load(prepared_dir)?;
    let (system, cfg) = build_system(&prepared, model, overrides)?;
    let report = evaluate_run(
        system.as_ref(),
        &prepared.train,
        &prepared.test,
        &cfg.split(),
        cfg.cutoff,
        cfg.entries(),
    )?;
    write_report(&report, out, "report")?;
    Ok(metrics_text(&report))
}

fn interpret_report(cfg: &RunConfig, truth: &ItemGroundTruth, metrics: BTreeMap<String, f64>) -> EvalReport {
    let mut metrics = metrics;
    metrics.insert("feature_average".into(), truth.feature_average());
    metrics.insert("described_items".into(), truth.described_items().count() as f64);
    EvalReport {
        fingerprint: cfg.entries(),
        metrics,
    }
}

/// SA@nM for n = 1..max_n; writes `sa.txt` and `sa.tsv`.
pub fn semantic_accuracy(
    prepared_dir: &Path,
    model: Option<&Path>,
    overrides: &[(String, String)],
    out: &Path,
) -> Result<String> {
    let prepared = Prepared::load(prepared_dir)?;
    let model = obtain_model(&prepared, model, overrides)?;
    let cfg = &model.config;
    let rows = model.params.item_rows();
    let curve = interpret::sa_curve(&rows, &prepared.truth, cfg.max_n, cfg.sa_mode)?;
    let metrics = curve
        .iter()
        .enumerate()
        .map(|(n, v)| (format!("sa@{}m", n + 1), *v))
        .collect();
    let report = interpret_report(cfg, &prepared.truth, metrics);
    write_report(&report, out, "sa")?;
    Ok(metrics_text(&report))
}

/// n-Rob@nM for n = 1..max_n; writes `robustness.txt`, `robustness.tsv` and
/// per-item outcomes in `robustness_items.tsv`.
pub fn robustness(
    prepared_dir: &Path,
    model: Option<&Path>,
    overrides: &[(String, String)],
    out: &Path,
) -> Result<String> {
    let prepared = Prepared::load(prepared_dir)?;
    let model = obtain_model(&prepared, model, overrides)?;
    let cfg = &model.config;
    let outcome = interpret::robustness_protocol(
        &prepared.train,
        &prepared.profiles,
        &prepared.truth,
        &model.params,
        &cfg.hyper(),
        cfg.rob_mode,
    )?;
    let metrics = outcome
        .curve(cfg.max_n, cfg.sa_mode)
        .into_iter()
        .enumerate()
        .map(|(n, v)| (format!("rob@{}m", n + 1), v))
        .collect();
    let report = interpret_report(cfg, &prepared.truth, metrics);
    write_report(&report, out, "robustness")?;

    let prefixes = PrefixTable::default();
    let mut s = String::from("item\tm\tfeature\tpredicate\tobject\trank\n");
    for (i, (f, rank)) in outcome.fmax.iter().zip(&outcome.rank).enumerate() {
        if let (Some(f), Some(rank)) = (f, rank) {
            let feat = prepared.features.get(*f).expect("feature id");
            let _ = writeln!(
                s,
                "{}\t{}\t{f}\t{}\t{}\t{rank}",
                prepared.train.items().external(i).expect("dense item id"),
                outcome.m[i],
                prefixes.compact(&feat.predicate),
                prefixes.compact(&feat.object)
            );
        }
    }
    write_file(&out.join("robustness_items.tsv"), &s)?;
    Ok(format!("mode = {}\n{}", outcome.mode, metrics_text(&report)))
}

/// Top features of an item and, with a user, why it was recommended.
pub fn explain(
    prepared_dir: &Path,
    model: Option<&Path>,
    overrides: &[(String, String)],
    item: &str,
    user: Option<&str>,
    out: Option<&Path>,
) -> Result<String> {
    let prepared = Prepared::load(prepared_dir)?;
    let model = obtain_model(&prepared, model, overrides)?;
    let cfg = &model.config;
    let items = prepared.train.items();
    let i = items.dense(item).ok_or_else(|| Error::Unknown {
        kind: "item",
        id: item.to_owned(),
    })?;
    let prefixes = PrefixTable::default();
    let e = interpret::explain_item(
        i,
        &model.params,
        &prepared.profiles,
        &prepared.features,
        items,
        &prefixes,
        cfg.explain_k,
    )?;
    let mut text = e.to_text();
    if let Some(user) = user {
        let u = prepared.train.users().dense(user).ok_or_else(|| Error::Unknown {
            kind: "user",
            id: user.to_owned(),
        })?;
        let history = prepared.train.items_by_user();
        if history[u].contains(&i) {
            return Err(Error::InvalidArgument(format!(
                "{user} already has {item} in training; pick an item it was not trained on"
            )));
        }
        let knn = kahfm_recommender(&model.params, Arc::new(Vec::new()), cfg.knn)?;
        let r = interpret::explain_recommendation(
            u,
            i,
            &history[u],
            knn.index(),
            &model.params,
            &prepared.features,
            &prefixes,
            cfg.explain_k,
        )?;
        text.push('\n');
        text.push_str(&r.to_text(items, prepared.train.users()));
    }
    if let Some(out) = out {
        create_dir(out)?;
        write_file(&out.join("explain.txt"), &text)?;
        write_file(&out.join("explain.tsv"), &e.to_tsv())?;
    }
    Ok(text)
}

/// Side-by-side difference of two `key = value` reports.
pub fn compare(a: &Path, b: &Path) -> Result<String> {
    let ra = EvalReport::parse_kv(&read_file(a)?, &a.display().to_string())?;
    let rb = EvalReport::parse_kv(&read_file(b)?, &b.display().to_string())?;
    Ok(render_comparison(&compare_reports(&ra, &rb)))
}
