#![no_main]

use libfuzzer_sys::fuzz_target;
use weaklabel::corpus::{Benchmark, Sentence};
use weaklabel::distill::distill_sentence;

// Input is `sentence \0 raw generation`.
fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let (text, raw) = s.split_once('\0').unwrap_or(("", s));
    let sentence = Sentence { index: 0, start: 0, end: text.chars().count(), text: text.to_string() };
    let r = distill_sentence("fuzz", &sentence, raw, &Benchmark::Medication2018.schema());
    for e in &r.entities {
        let got: String = text.chars().skip(e.start).take(e.end - e.start).collect();
        assert_eq!(got, e.text);
    }
});
