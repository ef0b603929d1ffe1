#![no_main]

use libfuzzer_sys::fuzz_target;
use weaklabel::export::{tokenize_subwords, Vocabulary};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let chars: Vec<char> = s.chars().collect();
    let mut last = 0;
    for t in tokenize_subwords(s, &Vocabulary::fixture()) {
        assert!(t.start >= last && t.start < t.end && t.end <= chars.len());
        last = t.end;
    }
});
