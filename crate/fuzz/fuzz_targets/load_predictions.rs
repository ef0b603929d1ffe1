#![no_main]

use libfuzzer_sys::fuzz_target;
use weaklabel::corpus::{Corpus, Note};
use weaklabel::eval::{load_predictions, write_predictions};

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let note = Note::new("n1", "Take aspirin 81 mg daily. Stop heparin.", Vec::new()).unwrap().segmented();
    let corpus = Corpus::new(vec![note]);
    if let Ok(pred) = load_predictions(s, &corpus) {
        if !s.starts_with("-DOCSTART-") {
            let again = load_predictions(&write_predictions(&pred), &corpus).expect("written predictions reload");
            assert_eq!(again, pred);
        }
    }
});
