#![no_main]

use libfuzzer_sys::fuzz_target;
use weaklabel::corpus::{parse_standoff, write_standoff};

// Input is `text \0 annotations`.
fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let (text, ann) = s.split_once('\0').unwrap_or((s, ""));
    if let Ok(note) = parse_standoff("fuzz", text, ann) {
        let n = text.chars().count();
        assert!(note.gold_entities.iter().all(|e| e.start < e.end && e.end <= n));
        let again = parse_standoff("fuzz", text, &write_standoff(&note)).expect("written annotations reparse");
        assert_eq!(again.gold_entities, note.gold_entities);
    }
});
