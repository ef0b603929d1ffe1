use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use weaklabel::corpus::{corpus_stats, Benchmark};
use weaklabel::cost::{decoder_flops, DecoderCostSpec, ENCODER_FLOPS_PER_SENTENCE};
use weaklabel::pipeline::{
    build_template, evaluate_predictions, ingest_corpus, resume, run_pipeline, PipelineError, RunConfig, RunReport,
    REPORT_FILE,
};
use weaklabel::select::select_gold_subset;

#[derive(Parser)]
#[command(name = "weaklabel", version, about = "Weak labeling of clinical notes with a chat LLM")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every stage into a fresh run directory.
    Run {
        /// TOML run configuration.
        config: PathBuf,
        /// Overrides `run_dir` from the config.
        #[arg(long)]
        run_dir: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Continue a run from its first incomplete stage.
    Resume {
        run_dir: PathBuf,
        /// Refuse to resume unless this config matches the run's snapshot.
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Score predictions (JSON-Lines or BIO) against a run's test corpus.
    Evaluate { run_dir: PathBuf, predictions: PathBuf },
    /// Print entity statistics of a corpus as CSV.
    Stats {
        /// Standoff directory or JSON-Lines file.
        corpus: PathBuf,
        #[arg(long, value_parser = parse_benchmark)]
        benchmark: Benchmark,
    },
    /// Print per-sentence decoder inference FLOPs.
    Flops(FlopsArgs),
    /// Print the few-shot prompt template a config would use.
    RenderTemplate {
        config: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
}

#[derive(Args, Default)]
struct Overrides {
    /// Size of the gold subset.
    #[arg(long)]
    n_s: Option<usize>,
    /// Seed for few-shot sampling, the validation split and cost sampling.
    #[arg(long)]
    seed: Option<u64>,
    /// Use an HTTP backend; clears any configured mock.
    #[arg(long, conflicts_with = "mock")]
    gateway_url: Option<String>,
    /// Use a mock backend (`echo-gold`, `fixed:..`, `scripted:..`, `fault:..`); clears any URL.
    #[arg(long)]
    mock: Option<String>,
    /// Concurrent generation requests.
    #[arg(long)]
    parallelism: Option<usize>,
}

impl Overrides {
    fn apply(self, cfg: &mut RunConfig) {
        if let Some(n) = self.n_s {
            cfg.selection.n_s = n;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(u) = self.gateway_url {
            cfg.gateway.url = Some(u);
            cfg.gateway.mock = None;
        }
        if let Some(m) = self.mock {
            cfg.gateway.mock = Some(m);
            cfg.gateway.url = None;
        }
        if let Some(p) = self.parallelism {
            cfg.gateway.parallelism = p;
        }
    }
}

#[derive(Args)]
struct FlopsArgs {
    #[arg(long, default_value_t = DecoderCostSpec::LLAMA2_13B.total_params)]
    params: u64,
    #[arg(long, default_value_t = DecoderCostSpec::LLAMA2_13B.n_layer)]
    layers: u64,
    #[arg(long, default_value_t = DecoderCostSpec::LLAMA2_13B.n_ctx)]
    ctx: u64,
    #[arg(long, default_value_t = DecoderCostSpec::LLAMA2_13B.d_attn)]
    d_attn: u64,
    #[arg(long, default_value_t = DecoderCostSpec::LLAMA2_13B.n_tokens_out)]
    tokens_out: u64,
}

fn parse_benchmark(s: &str) -> Result<Benchmark, String> {
    Benchmark::ALL
        .into_iter()
        .find(|b| b.id() == s)
        .ok_or_else(|| format!("unknown benchmark {s:?}; expected 2012, 2014 or 2018"))
}

fn load_config(path: &Path, overrides: Overrides) -> Result<RunConfig, PipelineError> {
    let mut cfg = RunConfig::load(path)?;
    cfg.apply_env();
    overrides.apply(&mut cfg);
    Ok(cfg)
}

fn print_report(report: &RunReport) {
    for s in &report.stages {
        println!("{:<13} {:<9} {:>8.2}s", s.stage.name(), format!("{:?}", s.status).to_lowercase(), s.duration_secs);
    }
    if let Some(w) = &report.weak_label {
        println!(
            "weak labels: {} sentences, {} ok, {} empty, {} failed",
            w.sentences, w.ok, w.empty, w.failed
        );
    }
    if let Some(c) = &report.cost {
        print!("{}", c.summary());
    }
    for f in &report.flags {
        println!("flag: {f}");
    }
    println!("report: {}", report.run_dir.join(REPORT_FILE).display());
}

fn execute(cmd: Command) -> Result<(), PipelineError> {
    match cmd {
        Command::Run {
            config,
            run_dir,
            overrides,
        } => {
            let mut cfg = load_config(&config, overrides)?;
            if run_dir.is_some() {
                cfg.run_dir = run_dir;
            }
            print_report(&run_pipeline(&cfg)?);
        }
        Command::Resume { run_dir, config } => {
            let cfg = config
                .map(|p| load_config(&p, Overrides::default()))
                .transpose()?;
            print_report(&resume(&run_dir, cfg.as_ref())?);
        }
        Command::Evaluate { run_dir, predictions } => {
            print!("{}", evaluate_predictions(&run_dir, &predictions)?.to_csv());
        }
        Command::Stats { corpus, benchmark } => {
            let c = ingest_corpus(&corpus, benchmark).map_err(PipelineError::Config)?;
            let stats = corpus_stats(&c, None).map_err(|e| PipelineError::Config(e.to_string()))?;
            print!("{}", stats.to_csv());
        }
        Command::Flops(a) => {
            let spec = DecoderCostSpec {
                total_params: a.params,
                n_layer: a.layers,
                n_ctx: a.ctx,
                d_attn: a.d_attn,
                n_tokens_out: a.tokens_out,
            };
            let flops = decoder_flops(&spec);
            println!("decoder_flops_per_sentence {flops}");
            println!("encoder_flops_per_sentence {ENCODER_FLOPS_PER_SENTENCE:e}");
            println!("ratio {:.1}", flops as f64 / ENCODER_FLOPS_PER_SENTENCE);
        }
        Command::RenderTemplate { config, overrides } => {
            let cfg = load_config(&config, overrides)?;
            let train = ingest_corpus(&cfg.corpus.train, cfg.task.benchmark).map_err(PipelineError::Config)?;
            let sel = select_gold_subset(&train, cfg.selection.n_s).map_err(|e| PipelineError::Config(e.to_string()))?;
            let gold = train.subset(&sel.gold_ids);
            let template = build_template(&cfg, &train, &gold).map_err(PipelineError::Config)?;
            print!("{}", template.snapshot());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
