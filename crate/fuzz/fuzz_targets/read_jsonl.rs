#![no_main]

use libfuzzer_sys::fuzz_target;
use weaklabel::corpus::{read_corpus_jsonl, write_corpus_jsonl};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(notes) = read_corpus_jsonl(s) {
        let again = read_corpus_jsonl(&write_corpus_jsonl(&notes)).expect("written corpus reloads");
        assert_eq!(again, notes);
    }
});
