use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Example;
use crate::error::{Error, Result};
use crate::numcore::Rng;

/// Which ids belong to which split.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitPartition {
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitName {
    Train,
    Val,
    Test,
}

impl SplitName {
    pub fn as_str(self) -> &'static str {
        match self {
            SplitName::Train => "train",
            SplitName::Val => "val",
            SplitName::Test => "test",
        }
    }
}

impl SplitPartition {
    /// Id → split lookup; errors if an id is listed twice.
    pub fn lookup(&self) -> Result<BTreeMap<&str, SplitName>> {
        let mut map = BTreeMap::new();
        for (name, ids) in [
            (SplitName::Train, &self.train),
            (SplitName::Val, &self.val),
            (SplitName::Test, &self.test),
        ] {
            for id in ids {
                if map.insert(id.as_str(), name).is_some() {
                    return Err(Error::input(format!("id {id} appears in more than one split")));
                }
            }
        }
        Ok(map)
    }

    /// Shuffled 8:1:1 partition of `ids`, deterministic in `seed`.
    pub fn random(ids: &[String], seed: u64) -> Self {
        let mut ids: Vec<String> = ids.to_vec();
        ids.sort();
        Rng::derive(seed, &[Rng::key("split")]).shuffle(&mut ids);
        let n = ids.len();
        let n_train = (n * 8) / 10;
        let n_val = (n - n_train) / 2;
        let mut p = SplitPartition {
            train: ids[..n_train].to_vec(),
            val: ids[n_train..n_train + n_val].to_vec(),
            test: ids[n_train + n_val..].to_vec(),
        };
        p.train.sort();
        p.val.sort();
        p.test.sort();
        p
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<Example>,
    pub val: Vec<Example>,
    pub test: Vec<Example>,
}

impl Splits {
    pub fn get(&self, name: SplitName) -> &[Example] {
        match name {
            SplitName::Train => &self.train,
            SplitName::Val => &self.val,
            SplitName::Test => &self.test,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (SplitName, &Example)> {
        self.train
            .iter()
            .map(|e| (SplitName::Train, e))
            .chain(self.val.iter().map(|e| (SplitName::Val, e)))
            .chain(self.test.iter().map(|e| (SplitName::Test, e)))
    }
}

/// Assigns every example to its split; each split is sorted by id.
pub fn split(examples: Vec<Example>, partition: &SplitPartition) -> Result<Splits> {
    let lookup = partition.lookup()?;
    let mut seen = BTreeSet::new();
    let mut out = Splits::default();
    for e in examples {
        if !seen.insert(e.id.clone()) {
            return Err(Error::input(format!("duplicate example id {}", e.id)));
        }
        match lookup.get(e.id.as_str()) {
            Some(SplitName::Train) => out.train.push(e),
            Some(SplitName::Val) => out.val.push(e),
            Some(SplitName::Test) => out.test.push(e),
            None => return Err(Error::input(format!("id {} is not in the split partition", e.id))),
        }
    }
    for s in [&mut out.train, &mut out.val, &mut out.test] {
        s.sort_by(|a, b| a.id.cmp(&b.id));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Class;

    fn ex(id: &str) -> Example {
        Example {
            id: id.into(),
            tokens: vec![],
            token_ids: vec![0, 1],
            attention_len: 2,
            class: Class::Normal,
            gold_rationale: vec![0, 0],
            target_groups: Default::default(),
        }
    }

    #[test]
    fn eight_one_one() {
        let ids: Vec<String> = (0..10).map(|i| format!("id{i}")).collect();
        let p = SplitPartition::random(&ids, 3);
        let s = split(ids.iter().map(|i| ex(i)).collect(), &p).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
        assert!(!s.train.iter().any(|e| e.id == s.test[0].id));
        let again = split(ids.iter().rev().map(|i| ex(i)).collect(), &p).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn missing_or_duplicate_ids() {
        let p = SplitPartition {
            train: vec!["a".into()],
            val: vec![],
            test: vec!["a".into()],
        };
        assert!(split(vec![ex("a")], &p).is_err());
        let p = SplitPartition {
            train: vec!["a".into()],
            ..Default::default()
        };
        assert!(split(vec![ex("b")], &p).is_err());
    }
}
