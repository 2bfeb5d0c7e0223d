use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use todo_core::commitment::{extract_candidates, CommitmentClassifier};
use todo_core::corpus::{load_corpus, synth_corpus, write_corpus, SynthSpec, TodoInstance};
use todo_core::harness::{self, PipelineConfig, RunLog, CLASSIFIER_DIR, WORD_VECTORS_FILE};
use todo_core::seq2seq::{beam_search, Example, Seq2SeqModel, Variant};

#[derive(Parser)]
#[command(name = "smart-todo", version, about = "Commitment detection and To-Do generation for email")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; `SMART_TODO__SECTION__KEY` variables override it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Corpus records (JSON lines); synthetic data when omitted.
    #[arg(long, global = true)]
    corpus: Option<PathBuf>,
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[arg(long, global = true)]
    checkpoints: Option<PathBuf>,
    #[arg(long, global = true)]
    threshold: Option<f64>,
    #[arg(long, global = true)]
    provider: Option<String>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    tau: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic corpus.
    Synth {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the commitment classifier.
    TrainClassifier,
    /// Score every sentence of the input emails and list commitments.
    Extract {
        #[arg(long)]
        input: PathBuf,
    },
    /// At-least-one-helpful@K table for every provider.
    Select,
    /// Train one generator variant.
    TrainGen {
        #[arg(long)]
        variant: Option<Variant>,
    },
    /// Decode To-Dos for records with known commitment sentences.
    Generate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Train every variant and write the comparison table.
    Evaluate,
    /// Email threads in, To-Dos out.
    Pipeline {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        generator: Option<PathBuf>,
    },
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::TrainClassifier => "train-classifier",
            Command::Extract { .. } => "extract",
            Command::Select => "select",
            Command::TrainGen { .. } => "train-gen",
            Command::Generate { .. } => "generate",
            Command::Evaluate => "evaluate",
            Command::Pipeline { .. } => "pipeline",
        }
    }
}

fn config(common: &Common) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::load(common.config.as_deref(), std::env::vars())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(p) = &common.corpus {
        cfg.paths.corpus = Some(p.clone());
    }
    if let Some(p) = &common.output {
        cfg.paths.output = p.clone();
    }
    if let Some(p) = &common.checkpoints {
        cfg.paths.checkpoints = p.clone();
    }
    if let Some(t) = common.threshold {
        cfg.commitment.threshold = t;
    }
    if let Some(p) = &common.provider {
        cfg.selection.provider = p.clone();
    }
    if let Some(k) = common.k {
        cfg.selection.k = k;
    }
    if let Some(t) = common.tau {
        cfg.selection.tau = t;
    }
    cfg.validate()?;
    cfg.check_paths()?;
    Ok(cfg)
}

fn records(path: &Path) -> Result<Vec<TodoInstance>> {
    let report = load_corpus(path, false)?;
    for d in &report.diagnostics {
        eprintln!("warning: {}: line {}: {}: {}", path.display(), d.line, d.field, d.message);
    }
    Ok(report.instances)
}

/// Reuses word vectors trained by an earlier command.
fn reuse_word_vectors(cfg: &mut PipelineConfig) {
    let saved = cfg.paths.output.join(WORD_VECTORS_FILE);
    if cfg.paths.word_vectors.is_none() && saved.is_file() {
        cfg.paths.word_vectors = Some(saved);
    }
}

fn print_jsonl<T: serde::Serialize>(rows: &[T]) -> Result<()> {
    for r in rows {
        println!("{}", serde_json::to_string(r)?);
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let mut cfg = config(&cli.common)?;
    let mut log = RunLog::new(&cfg);
    let stage = cli.command.stage();
    match cli.command {
        Command::Synth { n, out } => {
            let n = n.unwrap_or(cfg.synth.n_instances);
            let instances = synth_corpus(&SynthSpec::new(n, harness::derive_seed(cfg.seed, "synth")))?;
            write_corpus(&out, &instances)?;
            eprintln!("wrote {} instances to {}", instances.len(), out.display());
        }
        Command::TrainClassifier => {
            let instances = harness::load_instances(&cfg, &mut log)?;
            let split = harness::split(&cfg, &instances)?;
            harness::train_commitment(&cfg, &split, &mut log)?;
            eprintln!("saved {}", cfg.paths.checkpoints.join(CLASSIFIER_DIR).display());
        }
        Command::Extract { input } => {
            let model = CommitmentClassifier::load(&cfg.paths.checkpoints.join(CLASSIFIER_DIR))?;
            let emails: Vec<_> = records(&input)?.into_iter().map(|i| i.thread.candidate).collect();
            let found = extract_candidates(&model, &emails, cfg.commitment.threshold)?;
            let rows: Vec<_> = found
                .iter()
                .map(|c| serde_json::json!({"id": c.email_id, "sentence_index": c.sentence_index, "sentence": c.sentence, "score": c.score}))
                .collect();
            print_jsonl(&rows)?;
        }
        Command::Select => {
            let instances = harness::load_instances(&cfg, &mut log)?;
            let report = harness::run_selection_eval(&cfg, &instances, &mut log)?;
            print!("{}", report.to_text());
        }
        Command::TrainGen { variant } => {
            let variant = variant.unwrap_or(cfg.generation.variant);
            let instances = harness::load_instances(&cfg, &mut log)?;
            let split = harness::split(&cfg, &instances)?;
            let prov = harness::provider(&cfg, &cfg.selection.provider, &split.train, &mut log)?;
            let train = harness::examples(&cfg, &split.train, prov.as_ref())?;
            let validation = harness::examples(&cfg, &split.validation, prov.as_ref())?;
            harness::train_generator(&cfg, variant, &train, &validation, &mut log)?;
            eprintln!("saved {}", harness::generator_dir(&cfg, variant).display());
        }
        Command::Generate { ckpt, input, beam } => {
            reuse_word_vectors(&mut cfg);
            let model = Seq2SeqModel::load(&ckpt)?;
            let instances = records(&input)?;
            let prov = harness::provider(&cfg, &cfg.selection.provider, &instances, &mut log)?;
            let data: Vec<Example> = harness::examples(&cfg, &instances, prov.as_ref())?;
            let width = beam.unwrap_or(cfg.generation.train.beam_width);
            let mut rows = Vec::with_capacity(data.len());
            for ex in &data {
                let h = beam_search(&model, &ex.input, width, cfg.generation.train.max_decode_len)?;
                rows.push(serde_json::json!({"id": ex.id, "todo": h.text()}));
            }
            print_jsonl(&rows)?;
        }
        Command::Evaluate => {
            let report = harness::run_experiment(&cfg, &mut log)?;
            print!("{}", report.to_text());
        }
        Command::Pipeline { input, generator } => {
            reuse_word_vectors(&mut cfg);
            let classifier = CommitmentClassifier::load(&cfg.paths.checkpoints.join(CLASSIFIER_DIR))?;
            let gen_dir = generator.unwrap_or_else(|| harness::generator_dir(&cfg, cfg.generation.variant));
            let model = Seq2SeqModel::load(&gen_dir)?;
            let instances = records(&input)?;
            let prov = harness::provider(&cfg, &cfg.selection.provider, &instances, &mut log)?;
            let threads: Vec<_> = instances.into_iter().map(|i| i.thread).collect();
            print_jsonl(&harness::run_pipeline(&cfg, &classifier, &model, prov.as_ref(), &threads)?)?;
        }
    }
    std::fs::create_dir_all(&cfg.paths.output)?;
    log.write(&cfg.paths.output.join(format!("run-{stage}.jsonl")))?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let stage = cli.command.stage();
    match run(cli).with_context(|| stage) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
