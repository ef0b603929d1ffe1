#![allow(dead_code)]

use std::path::{Path, PathBuf};

use weaklabel::corpus::{load_corpus, Benchmark, Corpus};
use weaklabel::pipeline::RunConfig;

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join(name)
}

pub fn train_corpus() -> Corpus {
    load_corpus(&fixture("fixtures/corpus2018"), &Benchmark::Medication2018.schema()).expect("fixture corpus loads")
}

pub fn test_corpus() -> Corpus {
    load_corpus(&fixture("fixtures/test2018"), &Benchmark::Medication2018.schema()).expect("fixture corpus loads")
}

/// Fixture run with the given mock, writing into `run_dir`.
pub fn config(run_dir: &Path, mock: &str) -> RunConfig {
    let doc = format!(
        r#"
seed = 11

[corpus]
train = {train:?}
test = {test:?}

[task]
benchmark = "2018"
few_shot_k = 8

[selection]
n_s = 3

[gateway]
mock = {mock:?}
parallelism = 3
"#,
        train = fixture("fixtures/corpus2018").display().to_string(),
        test = fixture("fixtures/test2018").display().to_string(),
    );
    let mut c = RunConfig::parse(&doc).expect("fixture config parses");
    c.run_dir = Some(run_dir.to_path_buf());
    c
}
