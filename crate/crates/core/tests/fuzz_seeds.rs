//! Replays the checked-in fuzz seeds on stable with the same assertions the
//! fuzz targets make, so a seed that trips a target also fails here.

use std::fs;
use std::path::PathBuf;

use weaklabel::corpus::{
    parse_standoff, read_corpus_jsonl, segment_text, write_corpus_jsonl, write_standoff, Benchmark, Corpus,
    Note, Sentence,
};
use weaklabel::distill::distill_sentence;
use weaklabel::eval::{load_predictions, write_predictions};
use weaklabel::export::{parse_bio, tokenize_subwords, Vocabulary};
use weaklabel::pipeline::RunConfig;

fn seeds(target: &str) -> Vec<(String, String)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, String)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            let body = String::from_utf8(fs::read(&path).unwrap()).expect("seeds are utf-8");
            (path.file_name().unwrap().to_string_lossy().into_owned(), body)
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

#[test]
fn parse_standoff_seeds() {
    let mut accepted = 0;
    for (name, s) in seeds("parse_standoff") {
        let (text, ann) = s.split_once('\0').unwrap_or((&s, ""));
        if let Ok(note) = parse_standoff("fuzz", text, ann) {
            let n = text.chars().count();
            assert!(note.gold_entities.iter().all(|e| e.start < e.end && e.end <= n), "{name}");
            let again = parse_standoff("fuzz", text, &write_standoff(&note)).unwrap();
            assert_eq!(again.gold_entities, note.gold_entities, "{name}");
            accepted += 1;
        }
    }
    assert!(accepted >= 3);
}

#[test]
fn distill_payload_seeds() {
    let schema = Benchmark::Medication2018.schema();
    for (name, s) in seeds("distill_payload") {
        let (text, raw) = s.split_once('\0').unwrap_or(("", &s));
        let sentence = Sentence {
            index: 0,
            start: 0,
            end: text.chars().count(),
            text: text.to_string(),
        };
        let r = distill_sentence("fuzz", &sentence, raw, &schema);
        for e in &r.entities {
            let got: String = text.chars().skip(e.start).take(e.end - e.start).collect();
            assert_eq!(got, e.text, "{name}");
        }
    }
}

#[test]
fn parse_bio_seeds() {
    let results: Vec<bool> = seeds("parse_bio").iter().map(|(_, s)| parse_bio(s).is_ok()).collect();
    assert!(results.contains(&true) && results.contains(&false));
}

#[test]
fn load_predictions_seeds() {
    let note = Note::new("n1", "Take aspirin 81 mg daily. Stop heparin.", Vec::new())
        .unwrap()
        .segmented();
    let corpus = Corpus::new(vec![note]);
    let mut accepted = 0;
    for (name, s) in seeds("load_predictions") {
        if let Ok(pred) = load_predictions(&s, &corpus) {
            accepted += 1;
            if !s.starts_with("-DOCSTART-") {
                let again = load_predictions(&write_predictions(&pred), &corpus).unwrap();
                assert_eq!(again, pred, "{name}");
            }
        }
    }
    assert_eq!(accepted, 2);
}

#[test]
fn run_config_seeds() {
    let mut accepted = 0;
    for (name, s) in seeds("run_config") {
        if let Ok(cfg) = RunConfig::parse(&s) {
            let _ = cfg.validate();
            let again = RunConfig::parse(&cfg.snapshot()).unwrap();
            assert_eq!(again.hash(), cfg.hash(), "{name}");
            accepted += 1;
        }
    }
    assert_eq!(accepted, 3);
}

#[test]
fn tokenize_seeds() {
    let vocab = Vocabulary::fixture();
    for (name, s) in seeds("tokenize") {
        let n = s.chars().count();
        let mut last = 0;
        for t in tokenize_subwords(&s, &vocab) {
            assert!(t.start >= last && t.start < t.end && t.end <= n, "{name}");
            last = t.end;
        }
    }
}

#[test]
fn segment_seeds() {
    for (name, s) in seeds("segment") {
        let chars: Vec<char> = s.chars().collect();
        let mut last = 0;
        for sent in segment_text(&s) {
            assert!(sent.start >= last && sent.start < sent.end, "{name}");
            let got: String = chars[sent.start..sent.end].iter().collect();
            assert_eq!(got, sent.text, "{name}");
            last = sent.end;
        }
    }
}

#[test]
fn read_jsonl_seeds() {
    let mut accepted = 0;
    for (name, s) in seeds("read_jsonl") {
        if let Ok(notes) = read_corpus_jsonl(&s) {
            let again = read_corpus_jsonl(&write_corpus_jsonl(&notes)).unwrap();
            assert_eq!(again, notes, "{name}");
            accepted += 1;
        }
    }
    assert_eq!(accepted, 1);
}
