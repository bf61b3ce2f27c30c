use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use proptest::prelude::*;

use paremia::annotation::EmotionLabel;
use paremia::corpus::{
    load_annotations, load_proverbs, write_annotations, write_proverbs, AnnotationRecord, Corpus, CorpusError,
    FileFormat, Proverb, Variety,
};
use paremia::Sentiment;

fn data(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(rel)
}

#[test]
fn loads_csv_fixture() {
    let proverbs = load_proverbs(&data("e2e30/proverbs.csv"), FileFormat::Csv).unwrap();
    let annotations = load_annotations(&data("e2e30/annotations.csv"), FileFormat::Csv).unwrap();
    assert_eq!(proverbs.len(), 30);
    assert_eq!(proverbs.iter().filter(|p| p.variety == Variety::Standard).count(), 12);
    let localized: Vec<&Proverb> = proverbs.iter().filter(|p| p.variety == Variety::Localized).collect();
    assert_eq!(localized.len(), 18);
    assert!(localized.iter().all(|p| p.place.is_some() && p.coordinates().is_some()));
    let corpus = Corpus::new(proverbs, annotations).unwrap();
    assert_eq!(corpus.annotator_ids.len(), 5);
}

#[test]
fn unknown_sentiment_names_value_and_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("annotations.csv");
    std::fs::write(
        &path,
        "proverb_id,annotator_id,sentiment\np1,a1,Positive\np1,a2,Happy\n",
    )
    .unwrap();
    let err = load_annotations(&path, FileFormat::Csv).unwrap_err();
    match &err {
        CorpusError::Field { line, field, message } => {
            assert_eq!(*line, 3);
            assert_eq!(field, "sentiment");
            assert!(message.contains("Happy"), "{message}");
        }
        other => panic!("unexpected error {other:?}"),
    }
    let shown = err.to_string();
    assert!(shown.contains("line 3") && shown.contains("Happy"), "{shown}");
}

#[test]
fn unknown_sentiment_in_jsonl_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("annotations.jsonl");
    std::fs::write(
        &path,
        "{\"proverb_id\":\"p1\",\"annotator_id\":\"a1\",\"sentiment\":\"Negative\"}\n\
         {\"proverb_id\":\"p1\",\"annotator_id\":\"a2\",\"sentiment\":\"Happy\"}\n",
    )
    .unwrap();
    let shown = load_annotations(&path, FileFormat::Jsonl).unwrap_err().to_string();
    assert!(shown.contains("line 2") && shown.contains("Happy"), "{shown}");
}

#[test]
fn missing_column_and_half_coordinates_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.csv");
    std::fs::write(&path, "id,text\np1,Λόγια\n").unwrap();
    assert!(load_proverbs(&path, FileFormat::Csv).unwrap_err().to_string().contains("variety"));
    std::fs::write(&path, "id,text,variety,lat\np1,Λόγια,localized,38.5\n").unwrap();
    assert!(load_proverbs(&path, FileFormat::Csv).unwrap_err().to_string().contains("lon"));
}

#[test]
fn csv_and_jsonl_load_the_same_corpus() {
    let dir = tempfile::tempdir().unwrap();
    let proverbs = load_proverbs(&data("e2e30/proverbs.csv"), FileFormat::Csv).unwrap();
    let annotations = load_annotations(&data("e2e30/annotations.csv"), FileFormat::Csv).unwrap();
    let (pj, aj) = (dir.path().join("p.jsonl"), dir.path().join("a.jsonl"));
    write_proverbs(&pj, &proverbs, FileFormat::Jsonl).unwrap();
    write_annotations(&aj, &annotations, FileFormat::Jsonl).unwrap();
    assert_eq!(load_proverbs(&pj, FileFormat::Jsonl).unwrap(), proverbs);
    assert_eq!(load_annotations(&aj, FileFormat::Jsonl).unwrap(), annotations);
    assert_eq!(FileFormat::from_path(&pj), FileFormat::Jsonl);
    assert_eq!(FileFormat::from_path(&data("e2e30/proverbs.csv")), FileFormat::Csv);
}

fn proverb() -> impl Strategy<Value = Proverb> {
    (
        "[a-z0-9]{1,6}",
        "[Α-Ωα-ωά-ώa-z ,.'!;\"]{1,40}",
        prop::bool::ANY,
        prop::collection::vec("[a-zα-ω]{1,8}", 0..3),
        prop::option::of("[Α-Ω][α-ω]{1,9}"),
        prop::option::of((-90.0f64..=90.0, -180.0f64..=180.0)),
        prop::option::of("[a-z ]{1,12}"),
    )
        .prop_filter_map("blank text", |(id, text, std, topics, place, coords, source)| {
            let mut p = Proverb::new(id, text, if std { Variety::Standard } else { Variety::Localized });
            p.topics = topics;
            p.place = place;
            p.lat = coords.map(|c| c.0);
            p.lon = coords.map(|c| c.1);
            p.source = source.map(|s| s.trim().to_string()).filter(|s| !s.is_empty());
            p.validate().ok().map(|_| p)
        })
}

fn annotation() -> impl Strategy<Value = AnnotationRecord> {
    (
        "[a-z0-9]{1,6}",
        "[a-z]{1,4}",
        prop::option::of(prop::bool::ANY),
        prop::option::of(prop::sample::select(Sentiment::ALL.to_vec())),
        prop::collection::btree_set(prop::sample::select(EmotionLabel::ALL.to_vec()), 0..4),
    )
        .prop_map(|(proverb_id, annotator_id, seen_before, sentiment, emotions)| AnnotationRecord {
            proverb_id,
            annotator_id,
            seen_before,
            sentiment,
            emotions,
        })
}

fn unique_by<T, K: Ord>(items: Vec<T>, key: impl Fn(&T) -> K) -> Vec<T> {
    let mut seen = BTreeSet::new();
    items.into_iter().filter(|x| seen.insert(key(x))).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn proverbs_round_trip(ps in prop::collection::vec(proverb(), 1..12)) {
        let ps = unique_by(ps, |p| p.id.clone());
        let dir = tempfile::tempdir().unwrap();
        for (name, format) in [("p.csv", FileFormat::Csv), ("p.jsonl", FileFormat::Jsonl)] {
            let path = dir.path().join(name);
            write_proverbs(&path, &ps, format).unwrap();
            prop_assert_eq!(&load_proverbs(&path, format).unwrap(), &ps);
        }
    }

    #[test]
    fn annotations_round_trip(rs in prop::collection::vec(annotation(), 1..20)) {
        let rs = unique_by(rs, |r| (r.proverb_id.clone(), r.annotator_id.clone()));
        let dir = tempfile::tempdir().unwrap();
        for (name, format) in [("a.csv", FileFormat::Csv), ("a.jsonl", FileFormat::Jsonl)] {
            let path = dir.path().join(name);
            write_annotations(&path, &rs, format).unwrap();
            prop_assert_eq!(&load_annotations(&path, format).unwrap(), &rs);
        }
    }
}
