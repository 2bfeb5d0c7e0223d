//! Pipeline orchestration: configuration, per-stage seeds, the
//! end-to-end email → To-Do pipeline and the experiment reports.

mod config;
mod report;
mod runlog;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::commitment::{
    evaluate_classifier, labeled_sentences, train_classifier, ClassifierConfig, CommitmentClassifier, CommitmentError,
};
use crate::corpus::{load_corpus, split_dataset, synth_corpus, CorpusError, DatasetSplit, EmailThread, SynthSpec, TodoInstance};
use crate::metrics::{evaluate_texts, MetricsError};
use crate::selection::{
    at_least_one_helpful, lemma_sentences, select_for_instance, train_word_vectors, EmbeddingProvider, FileVectorProvider,
    Pooling, SelectionError, TfBinary, WordVecPool, WordVectorTable,
};
use crate::seq2seq::{
    beam_search, build_model, concatenate_baseline, train, Example, Seq2SeqError, Seq2SeqModel, TrainLog, Variant,
};

pub use config::{
    CommitmentSection, GenerationSection, Paths, PipelineConfig, SelectionSection, SplitSection, SynthSection, ENV_PREFIX,
    PROVIDERS,
};
pub use report::{ExperimentReport, ExperimentRow, SelectionReport, SelectionRow};
pub use runlog::{LogEntry, RunLog};

pub const CLASSIFIER_DIR: &str = "classifier";
pub const WORD_VECTORS_FILE: &str = "word_vectors.txt";

/// Errors carry the stage that failed.
#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("corpus: {0}")]
    Corpus(#[from] CorpusError),
    #[error("commitment: {0}")]
    Commitment(#[from] CommitmentError),
    #[error("selection: {0}")]
    Selection(#[from] SelectionError),
    #[error("generation: {0}")]
    Generation(#[from] Seq2SeqError),
    #[error("evaluation: {0}")]
    Metrics(#[from] MetricsError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        HarnessError::Io { path: path.display().to_string(), msg: e.to_string() }
    }
}

/// Stage seed: the first eight bytes of SHA-256(`"{seed}:{stage}"`).
pub fn derive_seed(seed: u64, stage: &str) -> u64 {
    let digest = Sha256::digest(format!("{seed}:{stage}").as_bytes());
    u64::from_le_bytes(digest[..8].try_into().expect("digest is 32 bytes"))
}

fn write_file(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| HarnessError::io(path, e))
}

/// The configured corpus, or a seeded synthetic one.
pub fn load_instances(cfg: &PipelineConfig, log: &mut RunLog) -> Result<Vec<TodoInstance>, HarnessError> {
    match &cfg.paths.corpus {
        Some(path) => {
            let report = load_corpus(path, false)?;
            for d in &report.diagnostics {
                log::warn!("{}: line {}: {}: {}", path.display(), d.line, d.field, d.message);
            }
            log.record("corpus", serde_json::json!({"path": path, "instances": report.instances.len(), "skipped": report.diagnostics.len()}));
            Ok(report.instances)
        }
        None => {
            let spec = SynthSpec::new(cfg.synth.n_instances, derive_seed(cfg.seed, "synth"));
            let instances = synth_corpus(&spec)?;
            log.record("corpus", serde_json::json!({"synthetic": true, "instances": instances.len()}));
            Ok(instances)
        }
    }
}

pub fn split(cfg: &PipelineConfig, instances: &[TodoInstance]) -> Result<DatasetSplit, HarnessError> {
    Ok(split_dataset(instances, cfg.split.ratios, derive_seed(cfg.seed, "split"))?)
}

pub fn classifier_config(cfg: &PipelineConfig) -> ClassifierConfig {
    ClassifierConfig { seed: derive_seed(cfg.seed, "commitment"), ..cfg.commitment.model.clone() }
}

/// Trains the commitment classifier on the train split, early-stopped on
/// the validation split, and saves it under the checkpoint directory.
pub fn train_commitment(cfg: &PipelineConfig, split: &DatasetSplit, log: &mut RunLog) -> Result<CommitmentClassifier, HarnessError> {
    let train = labeled_sentences(&split.train);
    let validation = labeled_sentences(&split.validation);
    let (model, train_log) = train_classifier(&train, &validation, &classifier_config(cfg))?;
    let test = evaluate_classifier(&model, &labeled_sentences(&split.test), cfg.commitment.threshold)?;
    log.record("train-classifier", serde_json::json!({"log": train_log, "test_at_threshold": test}));
    model.save(&cfg.paths.checkpoints.join(CLASSIFIER_DIR))?;
    Ok(model)
}

/// Word vectors from `paths.word_vectors`, or trained on the lemma streams
/// of `instances` and saved to the output directory.
pub fn word_vectors(cfg: &PipelineConfig, instances: &[TodoInstance], log: &mut RunLog) -> Result<WordVectorTable, HarnessError> {
    if let Some(path) = &cfg.paths.word_vectors {
        return Ok(WordVectorTable::load(path)?);
    }
    let wv = crate::selection::WordVectorConfig { seed: derive_seed(cfg.seed, "word-vectors"), ..cfg.selection.word_vectors.clone() };
    let table = train_word_vectors(&lemma_sentences(instances), &wv)?;
    let path = cfg.paths.output.join(WORD_VECTORS_FILE);
    write_file(&path, &table.to_text())?;
    log.record("word-vectors", serde_json::json!({"tokens": table.len(), "dim": table.dim(), "path": path}));
    Ok(table)
}

/// Builds the named relevance provider.
pub fn provider(
    cfg: &PipelineConfig,
    name: &str,
    instances: &[TodoInstance],
    log: &mut RunLog,
) -> Result<Box<dyn EmbeddingProvider>, HarnessError> {
    Ok(match name {
        "tf" => Box::new(TfBinary),
        "wv-mean" => Box::new(WordVecPool::new(word_vectors(cfg, instances, log)?, Pooling::Mean)),
        "wv-max" => Box::new(WordVecPool::new(word_vectors(cfg, instances, log)?, Pooling::Max)),
        "file" => {
            let path = cfg
                .paths
                .sentence_vectors
                .as_ref()
                .ok_or_else(|| HarnessError::Config("provider `file` needs paths.sentence_vectors".into()))?;
            Box::new(FileVectorProvider::load(path)?)
        }
        other => return Err(HarnessError::Config(format!("unknown provider `{other}`"))),
    })
}

/// Top-`k` selected sentence texts per instance, in score order.
pub fn select_sentences(
    instances: &[TodoInstance],
    provider: &dyn EmbeddingProvider,
    k: usize,
    tau: usize,
) -> Result<Vec<Vec<String>>, HarnessError> {
    instances
        .iter()
        .map(|inst| Ok(select_for_instance(inst, provider, k, tau)?.into_iter().map(|s| s.text).collect()))
        .collect()
}

pub fn examples(cfg: &PipelineConfig, instances: &[TodoInstance], provider: &dyn EmbeddingProvider) -> Result<Vec<Example>, HarnessError> {
    let selected = select_sentences(instances, provider, cfg.selection.k, cfg.selection.tau)?;
    instances
        .iter()
        .zip(&selected)
        .map(|(inst, sel)| Ok(Example::from_instance(inst, sel, cfg.generation.model.max_source_len)?))
        .collect()
}

pub fn generator_dir(cfg: &PipelineConfig, variant: Variant) -> PathBuf {
    cfg.paths.checkpoints.join(format!("generator-{variant}"))
}

/// Trains one generator variant and saves it.
pub fn train_generator(
    cfg: &PipelineConfig,
    variant: Variant,
    train_ex: &[Example],
    validation: &[Example],
    log: &mut RunLog,
) -> Result<(Seq2SeqModel, TrainLog), HarnessError> {
    let stage = format!("generator-{variant}");
    let model_cfg = crate::seq2seq::ModelConfig { variant, seed: derive_seed(cfg.seed, &stage), ..cfg.generation.model.clone() };
    let train_cfg = crate::seq2seq::TrainConfig { seed: derive_seed(cfg.seed, &format!("{stage}-batches")), ..cfg.generation.train.clone() };
    let mut model = build_model(model_cfg, train_ex)?;
    let train_log = train(&mut model, train_ex, validation, &train_cfg)?;
    log.record(&format!("train-{stage}"), &train_log);
    model.save(&generator_dir(cfg, variant))?;
    Ok((model, train_log))
}

/// Beam-decodes every example.
pub fn decode_all(cfg: &PipelineConfig, model: &Seq2SeqModel, data: &[Example]) -> Result<Vec<String>, HarnessError> {
    let t = &cfg.generation.train;
    data.iter()
        .map(|e| Ok(beam_search(model, &e.input, t.beam_width, t.max_decode_len)?.text()))
        .collect()
}

/// Trains every configured variant, decodes the test split and scores it
/// against the references, with the concatenation baseline first. Writes
/// `report.txt`, `report.jsonl` and one `predictions-<model>.txt` per row
/// into the output directory.
pub fn run_experiment(cfg: &PipelineConfig, log: &mut RunLog) -> Result<ExperimentReport, HarnessError> {
    let instances = load_instances(cfg, log)?;
    let split = split(cfg, &instances)?;
    let prov = provider(cfg, &cfg.selection.provider, &split.train, log)?;
    let train_ex = examples(cfg, &split.train, prov.as_ref())?;
    let val_ex = examples(cfg, &split.validation, prov.as_ref())?;
    let test_ex = examples(cfg, &split.test, prov.as_ref())?;
    let references: Vec<String> = split.test.iter().map(|i| i.reference().to_string()).collect();

    let mut report = ExperimentReport::default();
    let baseline = split.test.iter().map(concatenate_baseline).collect::<Result<Vec<_>, _>>()?;
    let mut outputs = vec![("concatenate".to_string(), baseline)];
    for &variant in &cfg.generation.experiment_variants {
        let (model, _) = train_generator(cfg, variant, &train_ex, &val_ex, log)?;
        outputs.push((variant.to_string(), decode_all(cfg, &model, &test_ex)?));
    }
    for (name, hyps) in outputs {
        let metrics = evaluate_texts(&hyps, &references)?;
        log.record("evaluate", serde_json::json!({"model": name, "metrics": metrics}));
        write_file(&cfg.paths.output.join(format!("predictions-{name}.txt")), &(hyps.join("\n") + "\n"))?;
        report.rows.push(ExperimentRow { model: name, metrics });
    }
    write_file(&cfg.paths.output.join("report.txt"), &report.to_text())?;
    write_file(&cfg.paths.output.join("report.jsonl"), &report.to_jsonl())?;
    Ok(report)
}

/// At-least-one-helpful@K for K ∈ {2, 3} and every provider that can be
/// built from the config (`file` only with sentence vectors). Writes
/// `selection.txt` and `selection.jsonl`.
pub fn run_selection_eval(cfg: &PipelineConfig, instances: &[TodoInstance], log: &mut RunLog) -> Result<SelectionReport, HarnessError> {
    if !instances.iter().any(|i| i.helpful_labels.is_some()) {
        return Err(HarnessError::Selection(SelectionError::InvalidConfig("no instance has helpful labels".into())));
    }
    let ks = vec![2, 3];
    let mut names = vec!["tf", "wv-mean", "wv-max"];
    if cfg.paths.sentence_vectors.is_some() {
        names.push("file");
    }
    let mut report = SelectionReport { ks: ks.clone(), rows: Vec::new() };
    let mut table = None;
    for name in names {
        let prov: Box<dyn EmbeddingProvider> = match name {
            "wv-mean" | "wv-max" => {
                if table.is_none() {
                    table = Some(word_vectors(cfg, instances, log)?);
                }
                let pooling = if name == "wv-mean" { Pooling::Mean } else { Pooling::Max };
                Box::new(WordVecPool::new(table.clone().expect("set above"), pooling))
            }
            other => provider(cfg, other, instances, log)?,
        };
        for &k in &ks {
            let r = at_least_one_helpful(instances, prov.as_ref(), k, cfg.selection.tau)?;
            report.rows.push(SelectionRow { provider: name.to_string(), k, value: r.value, evaluated: r.evaluated });
        }
    }
    log.record("select", &report);
    write_file(&cfg.paths.output.join("selection.txt"), &report.to_text())?;
    write_file(&cfg.paths.output.join("selection.jsonl"), &report.to_jsonl())?;
    Ok(report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub id: String,
    pub commitment: Option<String>,
    pub score: f64,
    pub todo: Option<String>,
}

/// Email → To-Do. The candidate email's sentences are scored; when the best
/// score reaches the threshold, that sentence becomes H, helpful sentences
/// are selected from the thread and the generator decodes a To-Do.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    classifier: &CommitmentClassifier,
    generator: &Seq2SeqModel,
    provider: &dyn EmbeddingProvider,
    threads: &[EmailThread],
) -> Result<Vec<PipelineOutput>, HarnessError> {
    let mut out = Vec::with_capacity(threads.len());
    for thread in threads {
        let id = thread.candidate.id.clone();
        let scores = classifier.score_email(&thread.candidate)?;
        let best = scores
            .iter()
            .enumerate()
            .fold(None, |b: Option<(usize, f64)>, (i, &s)| match b {
                Some((_, bs)) if bs >= s => b,
                _ => Some((i, s)),
            });
        let Some((index, score)) = best.filter(|&(_, s)| s >= cfg.commitment.threshold) else {
            out.push(PipelineOutput { id, commitment: None, score: best.map_or(0.0, |b| b.1), todo: None });
            continue;
        };
        let instance = TodoInstance {
            id: id.clone(),
            thread: thread.clone(),
            commitment_sentence_index: index,
            annotations: Vec::new(),
            helpful_labels: None,
        };
        let selected = select_sentences(std::slice::from_ref(&instance), provider, cfg.selection.k, cfg.selection.tau)?.remove(0);
        let input = crate::seq2seq::serialize_input(&instance, &selected, generator.config.max_source_len)?;
        let t = &cfg.generation.train;
        let todo = beam_search(generator, &input, t.beam_width, t.max_decode_len)?.text();
        out.push(PipelineOutput { id, commitment: Some(instance.commitment_sentence()), score, todo: Some(todo) });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seeds_differ_per_stage_and_are_stable() {
        assert_eq!(derive_seed(7, "split"), derive_seed(7, "split"));
        assert_ne!(derive_seed(7, "split"), derive_seed(7, "synth"));
        assert_ne!(derive_seed(7, "split"), derive_seed(8, "split"));
    }

    #[test]
    fn config_overrides() {
        let text = "seed = 3\n[selection]\nk = 3\n[generation.model]\nhidden = 32\n";
        let vars = vec![
            ("SMART_TODO__SELECTION__PROVIDER".to_string(), "tf".to_string()),
            ("SMART_TODO__GENERATION__TRAIN__DROPOUT".to_string(), "0.25".to_string()),
            ("SMART_TODO__COMMITMENT__THRESHOLD".to_string(), "0.8".to_string()),
            ("OTHER".to_string(), "x".to_string()),
        ];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.toml");
        fs::write(&path, text).unwrap();
        let cfg = PipelineConfig::load(Some(&path), vars).unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.selection.k, 3);
        assert_eq!(cfg.selection.provider, "tf");
        assert_eq!(cfg.generation.model.hidden, 32);
        assert_eq!(cfg.generation.model.embed_dim, 100);
        assert_eq!(cfg.generation.train.dropout, 0.25);
        assert_eq!(cfg.commitment.threshold, 0.8);

        let back = PipelineConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_errors() {
        assert!(PipelineConfig::from_toml_str("bogus = 1").is_err());
        let bad = vec![("SMART_TODO__COMMITMENT__THRESHOLD".to_string(), "1.5".to_string())];
        assert!(PipelineConfig::load(None, bad).is_err());
        let bad = vec![("SMART_TODO__SELECTION__PROVIDER".to_string(), "bert".to_string())];
        assert!(PipelineConfig::load(None, bad).is_err());
        let bad = vec![("SMART_TODO__SEED__X".to_string(), "1".to_string())];
        assert!(PipelineConfig::load(None, bad).is_err());
        let cfg = PipelineConfig { paths: Paths { corpus: Some("/nonexistent/x.jsonl".into()), ..Default::default() }, ..Default::default() };
        assert!(cfg.check_paths().is_err());
        assert!(PipelineConfig::default().check_paths().is_ok());
    }
}
