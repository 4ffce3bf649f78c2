//! On-disk artifacts: JSON/JSONL files carrying a provenance header.

use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use mrp_core::corpus::{Example, SplitName, Splits, Vocabulary};
use mrp_core::explain::ScoreRecord;
use mrp_core::{Error, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

pub const EXAMPLES_FILE: &str = "examples.jsonl";
pub const VOCAB_FILE: &str = "vocab.json";
pub const SPLIT_SUMMARY_FILE: &str = "split_summary.json";

/// First line of every JSONL artifact.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Header {
    pub kind: String,
    pub run_config: Value,
}

/// One line of `examples.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncodedLine {
    pub split: SplitName,
    #[serde(flatten)]
    pub example: Example,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VocabFile {
    pub run_config: Value,
    pub vocab: Vocabulary,
}

pub fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Error::input(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::input(format!("{}: {e}", path.display())))
}

pub fn write_jsonl<T: Serialize>(path: &Path, header: &Header, items: &[T]) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path)?);
    serde_json::to_writer(&mut w, header)?;
    w.write_all(b"\n")?;
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(Header, Vec<T>)> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| Error::input(format!("{} is empty", path.display())))??;
    let header: Header = serde_json::from_str(&first)
        .map_err(|e| Error::input(format!("{} header: {e}", path.display())))?;
    let mut items = Vec::new();
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        items.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::input(format!("{} line {}: {e}", path.display(), n + 2)))?,
        );
    }
    Ok((header, items))
}

/// Output of `ingest`, read back by the later commands.
pub struct Ingested {
    pub vocab: Vocabulary,
    pub splits: Splits,
}

impl Ingested {
    pub fn load(dir: &Path) -> Result<Self> {
        let examples = dir.join(EXAMPLES_FILE);
        if !examples.exists() {
            return Err(Error::input(format!(
                "{} not found; run `mrp ingest` first",
                examples.display()
            )));
        }
        let (_, lines): (_, Vec<EncodedLine>) = read_jsonl(&examples)?;
        let vocab: VocabFile = read_json(&dir.join(VOCAB_FILE))?;
        let mut splits = Splits::default();
        for line in lines {
            match line.split {
                SplitName::Train => splits.train.push(line.example),
                SplitName::Val => splits.val.push(line.example),
                SplitName::Test => splits.test.push(line.example),
            }
        }
        Ok(Ingested {
            vocab: vocab.vocab,
            splits,
        })
    }

    pub fn find(&self, id: &str) -> Option<&Example> {
        self.splits.iter().map(|(_, e)| e).find(|e| e.id == id)
    }
}

pub fn score_dump_path(dir: &Path, method: &str) -> PathBuf {
    dir.join(format!("scores_{method}.jsonl"))
}

pub fn read_score_dump(path: &Path) -> Result<(Header, Vec<ScoreRecord>)> {
    read_jsonl(path)
}
