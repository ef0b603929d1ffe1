#![no_main]

use libfuzzer_sys::fuzz_target;
use weaklabel::pipeline::RunConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(cfg) = RunConfig::parse(s) {
        let _ = cfg.validate();
        let again = RunConfig::parse(&cfg.snapshot()).expect("snapshot reparses");
        assert_eq!(again.hash(), cfg.hash());
    }
});
