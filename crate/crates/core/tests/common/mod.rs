#![allow(dead_code)]

use kgfm::eval::{holdout_split, SplitConfig};
use kgfm::ingest::{
    exclude_noisy, filter_by_missing, parse_interactions, parse_triples, select_setting, FeatureStore, PrefixTable,
    SettingKind, TripleFormat, TripleSource,
};
use kgfm::interpret::ItemGroundTruth;
use kgfm::profiles::{build_profile_matrix, EnjoyedItems, ProfileMatrix};
use kgfm::synth::{generate, SynthConfig};
use kgfm::{Dataset, FeatureSet};

/// A synthetic corpus taken through selection, split and profiles.
pub struct Fixture {
    pub data: Dataset,
    pub store: FeatureStore,
    pub features: FeatureSet,
    pub train: Dataset,
    pub test: Dataset,
    pub profiles: ProfileMatrix,
    pub truth: ItemGroundTruth,
}

pub fn fixture(cfg: &SynthConfig, split_seed: u64) -> Fixture {
    let corpus = generate(cfg).unwrap();
    let data = parse_interactions(corpus.interactions.as_bytes(), "interactions").unwrap();
    let prefixes = PrefixTable::default();
    let source = TripleSource {
        format: TripleFormat::Tsv,
        prefixes: &prefixes,
        mapping: None,
    };
    let raw = parse_triples(corpus.triples.as_bytes(), "triples", &source, data.items()).unwrap();
    let store = select_setting(&exclude_noisy(&raw), SettingKind::Categorical);
    let features = filter_by_missing(&store, 100.0, data.num_items()).unwrap();
    let split = SplitConfig {
        seed: split_seed,
        ..SplitConfig::default()
    };
    let (train, test) = holdout_split(&data, &split).unwrap();
    let profiles = build_profile_matrix(&train, &store, &features, EnjoyedItems::All).unwrap();
    let truth = ItemGroundTruth::new(store.ground_truth(&features));
    Fixture {
        data,
        store,
        features,
        train,
        test,
        profiles,
        truth,
    }
}

pub fn small(seed: u64) -> Fixture {
    fixture(
        &SynthConfig {
            seed,
            ..SynthConfig::default()
        },
        seed,
    )
}
