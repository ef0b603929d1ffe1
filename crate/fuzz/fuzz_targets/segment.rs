#![no_main]

use libfuzzer_sys::fuzz_target;
use weaklabel::corpus::segment_text;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let chars: Vec<char> = s.chars().collect();
    let mut last = 0;
    for sent in segment_text(s) {
        assert!(sent.start >= last && sent.start < sent.end);
        let got: String = chars[sent.start..sent.end].iter().collect();
        assert_eq!(got, sent.text);
        last = sent.end;
    }
});
