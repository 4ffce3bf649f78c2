//! Annotation ingestion: label/rationale aggregation, vocabulary, encoding
//! and deterministic splits.

mod class;
mod encode;
mod raw;
mod split;
mod vocab;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use class::Class;
pub use encode::{encode, pack_ids, Example};
pub use raw::{aggregate_label, aggregate_rationale, load_posts, parse_posts, Annotator, RawPost};
pub use split::{split, SplitName, SplitPartition, Splits};
pub use vocab::Vocabulary;

use crate::error::Result;

/// The ten target groups reported by the bias metrics.
pub const TARGET_GROUPS: [&str; 10] = [
    "African",
    "Islam",
    "Jewish",
    "Homosexual",
    "Women",
    "Refugee",
    "Arab",
    "Caucasian",
    "Asian",
    "Hispanic",
];

#[derive(Clone, Debug)]
pub struct Ingested {
    pub vocab: Vocabulary,
    pub splits: Splits,
    /// Ids of posts dropped for lacking a majority label.
    pub exclusions: Vec<String>,
}

/// Aggregates, builds the vocabulary from the train split, encodes and
/// splits. Every post must be listed in `partition`.
pub fn ingest(posts: &[RawPost], partition: &SplitPartition, min_freq: usize, max_len: usize) -> Result<Ingested> {
    let lookup = partition.lookup()?;
    let mut exclusions = Vec::new();
    let mut kept = Vec::new();
    for post in posts {
        let Some(&split_name) = lookup.get(post.post_id.as_str()) else {
            return Err(crate::Error::input(format!(
                "id {} is not in the split partition",
                post.post_id
            )));
        };
        match post.aggregate()? {
            Some(_) => kept.push((split_name, post)),
            None => exclusions.push(post.post_id.clone()),
        }
    }
    let train_tokens: Vec<&Vec<String>> = kept
        .iter()
        .filter(|(s, _)| *s == SplitName::Train)
        .map(|(_, p)| &p.post_tokens)
        .collect();
    let vocab = Vocabulary::build(train_tokens.iter().copied(), min_freq);
    let examples = kept
        .iter()
        .map(|(_, p)| encode(p, &vocab, max_len))
        .collect::<Result<Vec<_>>>()?;
    let splits = split(examples, partition)?;
    exclusions.sort();
    Ok(Ingested {
        vocab,
        splits,
        exclusions,
    })
}

/// Class histogram per split and group counts over all kept posts.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub classes: BTreeMap<String, BTreeMap<String, usize>>,
    pub groups: BTreeMap<String, usize>,
    pub exclusions: Vec<String>,
}

impl CorpusSummary {
    pub fn from_ingested(data: &Ingested) -> Self {
        let mut s = CorpusSummary {
            exclusions: data.exclusions.clone(),
            ..Default::default()
        };
        for name in [SplitName::Train, SplitName::Val, SplitName::Test] {
            let hist = s.classes.entry(name.as_str().to_string()).or_default();
            for c in Class::ALL {
                hist.insert(c.name().to_string(), 0);
            }
            for e in data.splits.get(name) {
                *hist.get_mut(e.class.name()).expect("all classes present") += 1;
                for g in &e.target_groups {
                    *s.groups.entry(g.clone()).or_default() += 1;
                }
            }
        }
        s
    }
}
