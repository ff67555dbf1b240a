use std::path::{Path, PathBuf};

use kgfm::config::RunConfig;
use kgfm::fm::init_kahfm;
use kgfm::persist::{decode, load_model};
use kgfm::pipeline::{self, obtain_model, Prepared};
use kgfm::synth::{write_corpus, SynthConfig};
use kgfm::Error;

fn corpus(dir: &Path) -> RunConfig {
    write_corpus(
        &SynthConfig {
            seed: 3,
            ..SynthConfig::default()
        },
        dir,
    )
    .unwrap();
    let mut cfg = RunConfig::default();
    cfg.set("data.interactions", &dir.join("interactions.tsv").display().to_string())
        .unwrap();
    cfg.set("data.triples", &dir.join("triples.tsv").display().to_string())
        .unwrap();
    cfg.set("train.iterations", "3").unwrap();
    cfg
}

fn kv(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
    pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
}

fn prepared(tmp: &Path) -> (RunConfig, PathBuf) {
    let cfg = corpus(&tmp.join("corpus"));
    let prep = tmp.join("prepared");
    pipeline::prepare(&cfg, &prep).unwrap();
    (cfg, prep)
}

#[test]
fn prepared_directory_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let (cfg, prep) = prepared(tmp.path());
    let p = Prepared::load(&prep).unwrap();
    assert_eq!(p.config.entries(), cfg.entries());
    assert_eq!(p.train.num_items(), 40);
    assert_eq!(p.profiles.dim(), p.features.len());
    assert_eq!(p.train.len() + p.test.len(), corpus_lines(&tmp.path().join("corpus")));
    let init = init_kahfm(&p.profiles);
    assert_eq!(init.k(), p.features.len());
    assert_eq!(p.truth.described_items().count(), 40);
    assert!(p.truth.described_items().all(|i| (3..=8).contains(&p.truth.m(i))));
}

fn corpus_lines(dir: &Path) -> usize {
    std::fs::read_to_string(dir.join("interactions.tsv"))
        .unwrap()
        .lines()
        .count()
}

#[test]
fn data_keys_are_locked_after_prepare() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, prep) = prepared(tmp.path());
    let p = Prepared::load(&prep).unwrap();
    for (key, value) in [("run.seed", "99"), ("features.setting", "os"), ("split.ratio", "0.5")] {
        let err = p.config_with(&kv(&[(key, value)])).err().unwrap();
        assert!(matches!(err, Error::Config(_)), "{key}: {err}");
    }
    // restating the prepared value is fine, and training keys stay free
    let ok = p
        .config_with(&kv(&[("run.seed", "0"), ("train.iterations", "1")]))
        .unwrap();
    assert_eq!(ok.hyper().iterations, 1);
}

#[test]
fn training_keys_are_locked_once_a_model_exists() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, prep) = prepared(tmp.path());
    let model_dir = tmp.path().join("model");
    pipeline::train(&prep, &[], &model_dir).unwrap();
    let model = model_dir.join("model.bin");
    let p = Prepared::load(&prep).unwrap();
    let err = obtain_model(&p, Some(&model), &kv(&[("train.iterations", "7")]))
        .err()
        .unwrap();
    assert!(matches!(err, Error::Config(_)), "{err}");
    let loaded = obtain_model(&p, Some(&model), &kv(&[("recommend.cutoff", "5")])).unwrap();
    assert_eq!(loaded.config.hyper().iterations, 3);

    // the stored parameters equal an in-process run with the same config
    let fresh = obtain_model(&p, None, &[]).unwrap();
    assert_eq!(loaded.params, fresh.params);
    let (params, meta) = load_model(&model).unwrap();
    assert_eq!(params, fresh.params);
    assert_eq!(meta.fingerprint, fresh.config.entries());
}

#[test]
fn model_from_other_data_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, prep) = prepared(tmp.path());
    pipeline::train(&prep, &[], &tmp.path().join("model")).unwrap();

    let other = tmp.path().join("other");
    write_corpus(
        &SynthConfig {
            seed: 4,
            ..SynthConfig::default()
        },
        &other,
    )
    .unwrap();
    let mut cfg = RunConfig::default();
    cfg.set(
        "data.interactions",
        &other.join("interactions.tsv").display().to_string(),
    )
    .unwrap();
    cfg.set("data.triples", &other.join("triples.tsv").display().to_string())
        .unwrap();
    let other_prep = tmp.path().join("other_prepared");
    pipeline::prepare(&cfg, &other_prep).unwrap();
    let err = pipeline::evaluate(
        &other_prep,
        Some(&tmp.path().join("model/model.bin")),
        &[],
        &tmp.path().join("e"),
    );
    assert!(matches!(err, Err(Error::Config(_))));
}

#[test]
fn corrupt_model_reports_offset() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, prep) = prepared(tmp.path());
    pipeline::train(&prep, &[], &tmp.path().join("model")).unwrap();
    let bytes = std::fs::read(tmp.path().join("model/model.bin")).unwrap();
    match decode(&bytes[..bytes.len() - 3]) {
        Err(Error::Format { offset, .. }) => assert!(offset <= bytes.len()),
        other => panic!("expected a format error, got {:?}", other.map(|_| ())),
    }
}

#[test]
fn temporal_split_needs_timestamps() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    write_corpus(&SynthConfig::default(), dir).unwrap();
    let stripped: String = std::fs::read_to_string(dir.join("interactions.tsv"))
        .unwrap()
        .lines()
        .map(|l| l.rsplit_once('\t').unwrap().0.to_owned() + "\n")
        .collect();
    std::fs::write(dir.join("plain.tsv"), stripped).unwrap();
    let mut cfg = RunConfig::default();
    cfg.set("data.interactions", &dir.join("plain.tsv").display().to_string())
        .unwrap();
    cfg.set("data.triples", &dir.join("triples.tsv").display().to_string())
        .unwrap();
    cfg.set("split.mode", "temporal").unwrap();
    let err = pipeline::prepare(&cfg, &dir.join("p")).err().unwrap();
    assert!(matches!(err, Error::Config(_)), "{err}");
    cfg.set("split.mode", "random").unwrap();
    pipeline::prepare(&cfg, &dir.join("p")).unwrap();
}

#[test]
fn every_system_evaluates() {
    let tmp = tempfile::tempdir().unwrap();
    let (_, prep) = prepared(tmp.path());
    for system in ["kahfm", "abitemknn", "vsm", "itemknn", "userknn", "mostpop", "bprfm"] {
        let out = tmp.path().join(system);
        pipeline::evaluate(&prep, None, &kv(&[("recommend.system", system)]), &out).unwrap();
        let text = std::fs::read_to_string(out.join("report.txt")).unwrap();
        let report = kgfm::eval::EvalReport::parse_kv(&text, "report.txt").unwrap();
        assert_eq!(report.fingerprint["system"], system);
        let p = report.metrics["precision@10"];
        assert!((0.0..=1.0).contains(&p), "{system}: {p}");
    }
}

#[test]
fn missing_input_names_the_path() {
    let mut cfg = RunConfig::default();
    cfg.set("data.interactions", "/nonexistent/ratings.tsv").unwrap();
    cfg.set("data.triples", "/nonexistent/triples.tsv").unwrap();
    let err = pipeline::stats(&cfg).err().unwrap();
    assert!(err.to_string().contains("/nonexistent/ratings.tsv"), "{err}");
}
