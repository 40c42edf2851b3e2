mod common;

use common::random_spans;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wsner::corpus::{
    layer, load_dataset, save_dataset, spans_to_tags, tags_to_spans, Dataset, Format, LabelScheme,
    Sentence,
};
use wsner::crf::{load_model, save_model, CrfModel, EmissionModel};
use wsner::emitter::{load_external_emissions, EmitterConfig, ExternalEmissions};

const LABELS: [&str; 3] = ["COM", "PER", "LOC"];

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn spans_survive_tag_encoding(seed in any::<u64>(), len in 0usize..40) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scheme = LabelScheme::new(LABELS).unwrap();
        let spans = random_spans(&mut rng, len, &LABELS);
        let tags = spans_to_tags(len, &spans, &scheme).unwrap();
        prop_assert!(tags.is_well_formed(&scheme));
        prop_assert_eq!(tags_to_spans(&tags, &scheme), spans);
    }

    #[test]
    fn decoding_any_tags_yields_valid_spans(tags in prop::collection::vec(0usize..7, 0..30)) {
        let scheme = LabelScheme::new(LABELS).unwrap();
        let spans = tags_to_spans(&wsner::corpus::TagSequence(tags.clone()), &scheme);
        prop_assert!(wsner::corpus::validate_spans(tags.len(), &spans).is_ok());
        let again = spans_to_tags(tags.len(), &spans, &scheme).unwrap();
        prop_assert_eq!(tags_to_spans(&again, &scheme), spans);
    }
}

fn random_dataset(seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let alphabet: Vec<char> = "华鑫科技公司发布了公告\"\\ \tab".chars().collect();
    let mut ds = Dataset::new();
    for k in 0..50 {
        let len = rng.gen_range(0..30);
        let text: String = (0..len)
            .map(|_| alphabet[rng.gen_range(0..alphabet.len())])
            .collect();
        let idx = ds.push(Sentence::new(format!("s{k}"), text)).unwrap();
        if rng.gen_bool(0.8) {
            ds.set_spans(layer::GOLD, idx, random_spans(&mut rng, len, &LABELS))
                .unwrap();
        }
        if rng.gen_bool(0.5) {
            ds.set_spans(
                layer::COARSE,
                idx,
                random_spans(&mut rng, len, &LABELS[..1]),
            )
            .unwrap();
        }
    }
    ds
}

#[test]
fn jsonl_dataset_round_trip_is_identity() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.jsonl");
    for seed in 0..5 {
        let ds = random_dataset(seed);
        save_dataset(&ds, &path, Format::Jsonl).unwrap();
        let first = std::fs::read(&path).unwrap();
        let back = load_dataset(&path, Format::Jsonl).unwrap();
        assert_eq!(back, ds);
        save_dataset(&back, &path, Format::Jsonl).unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), first);
    }
}

fn trained_like_model(seed: u64) -> CrfModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cfg = EmitterConfig {
        window: 2,
        hash_dim: 1 << 10,
        hash_seed: seed,
    };
    let mut m = CrfModel::new(LabelScheme::new(LABELS).unwrap(), cfg, true).unwrap();
    for x in m.crf_mut().transitions.iter_mut() {
        *x = rng.gen_range(-1.0..1.0);
    }
    if let EmissionModel::Hashed(e) = m.emitter_mut() {
        for _ in 0..300 {
            let (f, y) = (rng.gen_range(0..1 << 10), rng.gen_range(0..7));
            e.set_weight(f, y, rng.gen_range(-1.0..1.0));
        }
    }
    m
}

#[test]
fn model_file_round_trip_preserves_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.bin");
    let ds = random_dataset(9);
    for seed in 0..3 {
        let m = trained_like_model(seed);
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back, m);
        for s in ds.sentences() {
            assert_eq!(back.predict(s).unwrap(), m.predict(s).unwrap());
            assert_eq!(
                back.log_partition(s).unwrap().to_bits(),
                m.log_partition(s).unwrap().to_bits()
            );
        }
    }
}

#[test]
fn exported_emissions_reproduce_decoding() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("e.jsonl");
    let m = trained_like_model(4);
    let ds = random_dataset(4);
    let mut ext = ExternalEmissions::new(m.scheme().num_tags());
    for s in ds.sentences() {
        ext.insert(s.id(), m.emissions(s).unwrap()).unwrap();
    }
    ext.save(&path).unwrap();
    let loaded = load_external_emissions(&path, m.scheme()).unwrap();
    assert_eq!(loaded, ext);
    let mut external =
        CrfModel::with_emitter(m.scheme().clone(), EmissionModel::External(loaded), true);
    *external.crf_mut() = m.crf().clone();
    for s in ds.sentences() {
        assert_eq!(external.decode(s).unwrap(), m.decode(s).unwrap());
    }
}
