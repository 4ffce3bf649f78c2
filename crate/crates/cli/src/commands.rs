use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use mrp_core::corpus::{ingest, load_posts, Class, CorpusSummary, Example, SplitPartition};
use mrp_core::encoder::{Checkpoint, EncoderModel, ModelConfig};
use mrp_core::explain::{attention_scores, lime_scores, Method, ScoreRecord, TokenScores};
use mrp_core::metrics::{evaluate, performance, EvalReport, PredictionRecord};
use mrp_core::numcore::Rng;
use mrp_core::synthetic::{partition, to_dataset_json, ContextCorpus, LexiconCorpus};
use mrp_core::training::{
    detect_finetune, evaluate_rationale_prediction, init_model, predict_probabilities, train_stage1, EpochRecord,
    Stage, TrainingLog,
};
use mrp_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::artifacts::{
    create_dir, read_json, score_dump_path, write_json, write_jsonl, EncodedLine, Header, Ingested, VocabFile,
    EXAMPLES_FILE, SPLIT_SUMMARY_FILE, VOCAB_FILE,
};
use crate::config::RunConfig;

type Model = EncoderModel<f32>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSummaryFile {
    pub run_config: Value,
    #[serde(flatten)]
    pub summary: CorpusSummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainingLogFile {
    pub run_config: Value,
    pub checkpoint: String,
    pub metrics: BTreeMap<String, f64>,
    #[serde(flatten)]
    pub log: TrainingLog,
}

fn out_dir(cfg: &RunConfig) -> PathBuf {
    PathBuf::from(&cfg.output_dir)
}

fn required<'a>(path: &'a Option<String>, key: &str) -> Result<&'a str> {
    path.as_deref()
        .ok_or_else(|| Error::input(format!("{key} is not set (config file, --set or flag)")))
}

pub fn cmd_ingest(cfg: &RunConfig) -> Result<CorpusSummary> {
    let posts = load_posts(Path::new(required(&cfg.data.dataset, "data.dataset")?))?;
    let partition = match &cfg.data.split {
        Some(p) => SplitPartition::load(Path::new(p))?,
        None => partition(&posts, cfg.seed),
    };
    let data = ingest(&posts, &partition, cfg.data.min_freq, cfg.model.max_len)?;
    let dir = out_dir(cfg);
    create_dir(&dir)?;
    let run_config = cfg.to_value();

    let lines: Vec<EncodedLine> = data
        .splits
        .iter()
        .map(|(split, e)| EncodedLine {
            split,
            example: e.clone(),
        })
        .collect();
    let header = Header {
        kind: "examples".into(),
        run_config: run_config.clone(),
    };
    write_jsonl(&dir.join(EXAMPLES_FILE), &header, &lines)?;
    write_json(
        &dir.join(VOCAB_FILE),
        &VocabFile {
            run_config: run_config.clone(),
            vocab: data.vocab.clone(),
        },
    )?;
    let summary = CorpusSummary::from_ingested(&data);
    write_json(
        &dir.join(SPLIT_SUMMARY_FILE),
        &SplitSummaryFile {
            run_config,
            summary: summary.clone(),
        },
    )?;

    println!("{:<6} {:>8} {:>10} {:>10}", "split", "normal", "offensive", "hatespeech");
    for (split, hist) in &summary.classes {
        println!(
            "{:<6} {:>8} {:>10} {:>10}",
            split,
            hist[Class::Normal.name()],
            hist[Class::Offensive.name()],
            hist[Class::Hatespeech.name()]
        );
    }
    for (group, n) in &summary.groups {
        println!("group {group}: {n}");
    }
    println!("vocabulary: {} tokens", data.vocab.len());
    if summary.exclusions.is_empty() {
        println!("excluded (no majority label): none");
    } else {
        println!("excluded (no majority label): {}", summary.exclusions.join(", "));
    }
    Ok(summary)
}

/// Model config with the vocabulary size filled in from the ingested data.
fn model_config(cfg: &RunConfig, data: &Ingested) -> Result<ModelConfig> {
    let mut m = cfg.model.clone();
    if m.vocab_size == 0 {
        m.vocab_size = data.vocab.len();
    } else if m.vocab_size != data.vocab.len() {
        return Err(Error::input(format!(
            "model.vocab_size {} differs from the ingested vocabulary ({})",
            m.vocab_size,
            data.vocab.len()
        )));
    }
    if let Some(e) = data.splits.iter().map(|(_, e)| e).next() {
        if e.token_ids.len() != m.max_len {
            return Err(Error::input(format!(
                "examples were ingested with length {}, model.max_len is {}; re-run ingest",
                e.token_ids.len(),
                m.max_len
            )));
        }
    }
    m.validate()?;
    Ok(m)
}

fn print_epoch(r: &EpochRecord) {
    println!("{} epoch {} loss {:.6} steps {}", r.stage, r.epoch, r.loss, r.steps);
}

pub struct Trained {
    pub model: Model,
    pub log: TrainingLog,
    pub metrics: BTreeMap<String, f64>,
}

/// Stage-1 training from a fresh model, with held-out rationale metrics.
pub fn pretrain(cfg: &RunConfig, data: &Ingested, stage: Stage) -> Result<Trained> {
    let mcfg = model_config(cfg, data)?;
    let tcfg = cfg.stage_config(stage);
    let mut model: Model = init_model(mcfg, cfg.seed)?;
    let log = train_stage1(&mut model, &data.splits.train, &tcfg, &mut print_epoch)?;
    let mut metrics = BTreeMap::new();
    if let Some(l) = log.final_loss() {
        metrics.insert("train_loss".to_string(), l);
    }
    if stage != Stage::Mlm && !data.splits.val.is_empty() {
        let ev = evaluate_rationale_prediction(&model, &data.splits.val, tcfg.effective_mask_ratio(), cfg.seed)?;
        metrics.insert("val_masked_loss".to_string(), ev.loss);
        metrics.insert("val_masked_accuracy".to_string(), ev.accuracy);
    }
    Ok(Trained { model, log, metrics })
}

pub fn detect(cfg: &RunConfig, data: &Ingested, init: Option<Model>) -> Result<Trained> {
    let mcfg = model_config(cfg, data)?;
    let tcfg = cfg.stage_config(Stage::Detect);
    let (model, log) = detect_finetune(init, &mcfg, &data.splits.train, &tcfg, &mut print_epoch)?;
    let mut metrics = BTreeMap::new();
    if let Some(l) = log.final_loss() {
        metrics.insert("train_loss".to_string(), l);
    }
    if !data.splits.val.is_empty() {
        let records = prediction_records(&model, &data.splits.val)?;
        let p = performance(&records)?;
        metrics.insert("val_accuracy".to_string(), p.accuracy);
        metrics.insert("val_macro_f1".to_string(), p.macro_f1);
    }
    Ok(Trained { model, log, metrics })
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint<f32>> {
    if !path.exists() {
        return Err(Error::input(format!("checkpoint {} not found", path.display())));
    }
    Checkpoint::load(path)
}

pub fn save_trained(cfg: &RunConfig, trained: &Trained, stage: Stage, path: &Path) -> Result<()> {
    let mut ck = Checkpoint::new(trained.model.clone(), stage.as_str(), cfg.seed, trained.log.epochs.len());
    ck.header.metrics = trained.metrics.clone();
    ck.header.run_config = cfg.to_value();
    ck.save(path)?;
    write_json(
        &log_path(path),
        &TrainingLogFile {
            run_config: cfg.to_value(),
            checkpoint: path.display().to_string(),
            metrics: trained.metrics.clone(),
            log: trained.log.clone(),
        },
    )
}

/// `<dir>/<stem>.log.json` beside a `<dir>/<stem>.ckpt`.
pub fn log_path(checkpoint: &Path) -> PathBuf {
    checkpoint.with_file_name(format!("{}.log.json", checkpoint_name(checkpoint)))
}

/// Trains one stage and writes `<name>.ckpt` plus `<name>.log.json`.
pub fn cmd_train(cfg: &RunConfig, stage: Stage, name: Option<&str>) -> Result<PathBuf> {
    let dir = out_dir(cfg);
    let data = Ingested::load(&dir)?;
    let trained = match stage {
        Stage::Detect => {
            let init = match &cfg.detect.init_checkpoint {
                Some(p) => Some(load_checkpoint(Path::new(p))?.model),
                None => None,
            };
            detect(cfg, &data, init)?
        }
        _ => pretrain(cfg, &data, stage)?,
    };
    let path = dir.join(format!("{}.ckpt", name.unwrap_or(stage.as_str())));
    save_trained(cfg, &trained, stage, &path)?;
    for (k, v) in &trained.metrics {
        println!("{k}: {v:.6}");
    }
    println!("wrote {}", path.display());
    Ok(path)
}

fn prediction_records(model: &Model, examples: &[Example]) -> Result<Vec<PredictionRecord>> {
    predict_probabilities(model, examples)?
        .into_iter()
        .zip(examples)
        .map(|(p, e)| PredictionRecord::new(e, p))
        .collect()
}

/// LIME draws from a stream keyed by the post, so `eval` and `explain`
/// agree on every post.
pub fn token_scores(cfg: &RunConfig, model: &Model, example: &Example, method: Method) -> Result<TokenScores> {
    match method {
        Method::Attention => attention_scores(model, example, cfg.eval.head_reduction),
        Method::Lime => {
            let mut rng = Rng::derive(cfg.seed, &[Rng::key("lime"), Rng::key(&example.id)]);
            lime_scores(model, example, &cfg.eval.lime, &mut rng)
        }
    }
}

/// Scores the test split and writes the report and score dumps into `dir`.
pub fn evaluate_into(cfg: &RunConfig, model: &Model, name: &str, test: &[Example], dir: &Path) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::input("the test split is empty"));
    }
    create_dir(dir)?;
    let mut records = prediction_records(model, test)?;
    let header = Header {
        kind: "scores".into(),
        run_config: cfg.to_value(),
    };
    for &method in &cfg.eval.methods {
        let mut dump = Vec::with_capacity(test.len());
        for (e, r) in test.iter().zip(records.iter_mut()) {
            let s = token_scores(cfg, model, e, method)?;
            r.token_scores.insert(method, s.scores.clone());
            dump.push(ScoreRecord::new(e, &s));
        }
        write_jsonl(&score_dump_path(dir, method.as_str()), &header, &dump)?;
    }
    let mut report = evaluate(name, model, test, &records, &cfg.eval.options())?;
    report.run_config = cfg.to_value();
    write_json(&dir.join("report.json"), &report)?;
    write_csv(&dir.join("report.csv"), &report)?;
    Ok(report)
}

fn write_csv(path: &Path, report: &EvalReport) -> Result<()> {
    let to_io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    let mut w = csv::Writer::from_path(path).map_err(to_io)?;
    w.write_record(["model", "metric", "value"]).map_err(to_io)?;
    for (model, metric, value) in report.rows() {
        let v = value.map(|v| v.to_string()).unwrap_or_default();
        w.write_record([model.as_str(), metric.as_str(), v.as_str()]).map_err(to_io)?;
    }
    w.flush()?;
    Ok(())
}

fn print_report(report: &EvalReport) {
    for (_, metric, value) in report.rows() {
        match value {
            Some(v) => println!("{metric:<28} {v:.4}"),
            None => println!("{metric:<28} -"),
        }
    }
}

fn checkpoint_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model".into())
}

/// Evaluates a checkpoint into `<output_dir>/eval/<checkpoint stem>/`.
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path) -> Result<PathBuf> {
    let ck = load_checkpoint(checkpoint)?;
    let data = Ingested::load(&out_dir(cfg))?;
    let name = checkpoint_name(checkpoint);
    let dir = out_dir(cfg).join("eval").join(&name);
    let report = evaluate_into(cfg, &ck.model, &name, &data.splits.test, &dir)?;
    print_report(&report);
    println!("wrote {}", dir.display());
    Ok(dir)
}

/// Prints the token table for one post and writes it as a one-record
/// score dump to `<output_dir>/explain/<id>.<method>.jsonl`.
pub fn cmd_explain(cfg: &RunConfig, checkpoint: &Path, id: &str, method: Method) -> Result<PathBuf> {
    let ck = load_checkpoint(checkpoint)?;
    let data = Ingested::load(&out_dir(cfg))?;
    let example = data
        .find(id)
        .ok_or_else(|| Error::input(format!("post {id:?} is not in the ingested data")))?;
    let scores = token_scores(cfg, &ck.model, example, method)?;
    let record = ScoreRecord::new(example, &scores);

    println!("post {id} gold {} predicted {}", example.class.name(), record.predicted_class.name());
    let probs: Vec<String> = record.class_probs.iter().map(|p| format!("{p:.4}")).collect();
    println!("class probabilities: {}", probs.join(" "));
    println!("{:<20} {:>9} {:>8}", "token", "rationale", method.as_str());
    for ((t, r), s) in example.tokens.iter().zip(example.word_rationale()).zip(&record.scores) {
        println!("{t:<20} {r:>9} {s:>8.4}");
    }

    let dir = out_dir(cfg).join("explain");
    create_dir(&dir)?;
    let path = dir.join(format!("{id}.{method}.jsonl"));
    let header = Header {
        kind: "scores".into(),
        run_config: cfg.to_value(),
    };
    write_jsonl(&path, &header, std::slice::from_ref(&record))?;
    println!("{}", serde_json::to_string(&record)?);
    Ok(path)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub mask_ratio: f64,
    pub dir: String,
    pub pretrain_metrics: BTreeMap<String, f64>,
    pub macro_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub run_config: Value,
    pub entries: Vec<SweepEntry>,
}

/// MRP at each ratio, then detection and evaluation, one directory per
/// ratio under `<output_dir>/sweep/`.
pub fn cmd_sweep(cfg: &RunConfig, ratios: &[f64]) -> Result<PathBuf> {
    if ratios.is_empty() {
        return Err(Error::input("no ratios given"));
    }
    let root = out_dir(cfg).join("sweep");
    let data = Ingested::load(&out_dir(cfg))?;
    let mut entries = Vec::new();
    for &ratio in ratios {
        let dir = root.join(format!("ratio_{ratio}"));
        create_dir(&dir)?;
        let mut run = cfg.clone();
        run.pretrain.mask_ratio = ratio;
        let ckpt = dir.join("mrp.ckpt");
        run.detect.init_checkpoint = Some(ckpt.display().to_string());

        println!("mask ratio {ratio}");
        let pre = pretrain(&run, &data, Stage::Mrp)?;
        save_trained(&run, &pre, Stage::Mrp, &ckpt)?;
        let det = detect(&run, &data, Some(pre.model.clone()))?;
        save_trained(&run, &det, Stage::Detect, &dir.join("detect.ckpt"))?;
        let report = evaluate_into(&run, &det.model, &format!("mrp_{ratio}"), &data.splits.test, &dir)?;
        println!("mask ratio {ratio}: macro-F1 {:.4}", report.performance.macro_f1);
        entries.push(SweepEntry {
            mask_ratio: ratio,
            dir: dir.display().to_string(),
            pretrain_metrics: pre.metrics,
            macro_f1: report.performance.macro_f1,
        });
    }
    write_json(
        &root.join("summary.json"),
        &SweepSummary {
            run_config: cfg.to_value(),
            entries,
        },
    )?;
    println!("wrote {}", root.display());
    Ok(root)
}

pub fn parse_ratios(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|r| {
            let v: f64 = r
                .trim()
                .parse()
                .map_err(|_| Error::input(format!("bad ratio {r:?}")))?;
            if v > 0.0 && v <= 1.0 {
                Ok(v)
            } else {
                Err(Error::input(format!("ratio {v} not in (0, 1]")))
            }
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum SynthKind {
    Lexicon,
    Context,
}

/// Writes a synthetic `dataset.json` and `split.json` into the output
/// directory. These are inputs, so they carry no run config.
pub fn cmd_synth(cfg: &RunConfig, kind: SynthKind, posts: usize) -> Result<(PathBuf, PathBuf)> {
    let posts = match kind {
        SynthKind::Lexicon => LexiconCorpus {
            posts,
            seed: cfg.seed,
            ..LexiconCorpus::default()
        }
        .generate(),
        SynthKind::Context => ContextCorpus {
            posts,
            seed: cfg.seed,
            ..ContextCorpus::default()
        }
        .generate(),
    };
    let dir = out_dir(cfg);
    create_dir(&dir)?;
    let dataset = dir.join("dataset.json");
    let split = dir.join("split.json");
    write_json(&dataset, &to_dataset_json(&posts))?;
    write_json(&split, &partition(&posts, cfg.seed))?;
    println!("wrote {} posts to {}", posts.len(), dataset.display());
    println!("wrote {}", split.display());
    Ok((dataset, split))
}

/// Reads the split summary back (used by tests and scripts).
pub fn read_split_summary(dir: &Path) -> Result<SplitSummaryFile> {
    read_json(&dir.join(SPLIT_SUMMARY_FILE))
}
