use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Class;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Annotator {
    pub label: String,
    #[serde(default, rename = "target", alias = "targets")]
    pub targets: Vec<String>,
}

/// One post as annotated, before aggregation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawPost {
    #[serde(default)]
    pub post_id: String,
    pub post_tokens: Vec<String>,
    pub annotators: Vec<Annotator>,
    #[serde(default)]
    pub rationales: Vec<Vec<u8>>,
}

impl RawPost {
    pub fn validate(&self) -> Result<()> {
        let id = &self.post_id;
        if self.annotators.is_empty() {
            return Err(Error::input(format!("post {id}: no annotators")));
        }
        for a in &self.annotators {
            Class::from_label(&a.label).map_err(|e| Error::input(format!("post {id}: {e}")))?;
        }
        for (i, r) in self.rationales.iter().enumerate() {
            if r.len() != self.post_tokens.len() {
                return Err(Error::input(format!(
                    "post {id}: rationale {i} has {} entries for {} tokens",
                    r.len(),
                    self.post_tokens.len()
                )));
            }
            if r.iter().any(|&b| b > 1) {
                return Err(Error::input(format!("post {id}: rationale {i} is not binary")));
            }
        }
        Ok(())
    }

    pub fn labels(&self) -> Result<Vec<Class>> {
        self.annotators.iter().map(|a| Class::from_label(&a.label)).collect()
    }

    /// Union of all annotators' target groups, sorted.
    pub fn target_groups(&self) -> Vec<String> {
        let mut groups: Vec<String> = self
            .annotators
            .iter()
            .flat_map(|a| a.targets.iter().cloned())
            .collect();
        groups.sort();
        groups.dedup();
        groups
    }

    /// Aggregated label and rationale, or `None` when the label has no
    /// strict majority.
    pub fn aggregate(&self) -> Result<Option<(Class, Vec<u8>)>> {
        self.validate()?;
        let Some(class) = aggregate_label(&self.labels()?)? else {
            return Ok(None);
        };
        let rationale = if class == Class::Normal {
            vec![0; self.post_tokens.len()]
        } else {
            aggregate_rationale(&self.rationales, self.post_tokens.len())?
        };
        Ok(Some((class, rationale)))
    }
}

/// Strict-majority label; `None` when no label has more than half the votes.
pub fn aggregate_label(labels: &[Class]) -> Result<Option<Class>> {
    if labels.is_empty() {
        return Err(Error::input("cannot aggregate an empty label list"));
    }
    for c in Class::ALL {
        let votes = labels.iter().filter(|&&l| l == c).count();
        if 2 * votes > labels.len() {
            return Ok(Some(c));
        }
    }
    Ok(None)
}

/// Position `i` is 1 iff the mean annotator bit is strictly above 0.5.
pub fn aggregate_rationale(rationales: &[Vec<u8>], n_tokens: usize) -> Result<Vec<u8>> {
    if let Some(bad) = rationales.iter().find(|r| r.len() != n_tokens) {
        return Err(Error::input(format!(
            "rationale of length {} for {n_tokens} tokens",
            bad.len()
        )));
    }
    let n = rationales.len();
    Ok((0..n_tokens)
        .map(|i| {
            let ones = rationales.iter().filter(|r| r[i] != 0).count();
            u8::from(n > 0 && 2 * ones > n)
        })
        .collect())
}

/// Parses a dataset file mapping post id to annotations. Posts come back
/// sorted by id; the map key wins over any embedded `post_id`.
pub fn parse_posts(json: &str) -> Result<Vec<RawPost>> {
    let map: BTreeMap<String, serde_json::Value> = serde_json::from_str(json)?;
    let mut posts = Vec::with_capacity(map.len());
    for (id, value) in map {
        let mut post: RawPost =
            serde_json::from_value(value).map_err(|e| Error::input(format!("post {id}: {e}")))?;
        post.post_id = id;
        post.validate()?;
        posts.push(post);
    }
    Ok(posts)
}

pub fn load_posts(path: &Path) -> Result<Vec<RawPost>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::input(format!("cannot read {}: {e}", path.display())))?;
    parse_posts(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use Class::*;

    #[test]
    fn majority_labels() {
        assert_eq!(aggregate_label(&[Hatespeech, Hatespeech, Normal]).unwrap(), Some(Hatespeech));
        assert_eq!(aggregate_label(&[Normal]).unwrap(), Some(Normal));
        assert_eq!(aggregate_label(&[Hatespeech, Offensive, Normal]).unwrap(), None);
        assert_eq!(aggregate_label(&[Offensive, Normal]).unwrap(), None);
        assert!(aggregate_label(&[]).is_err());
    }

    #[test]
    fn rationale_threshold_is_strict() {
        assert_eq!(aggregate_rationale(&[vec![1, 0], vec![1, 1], vec![0, 0]], 2).unwrap(), vec![1, 0]);
        assert_eq!(aggregate_rationale(&[vec![1, 0], vec![0, 1]], 2).unwrap(), vec![0, 0]);
        assert_eq!(aggregate_rationale(&[], 3).unwrap(), vec![0, 0, 0]);
        assert!(aggregate_rationale(&[vec![1]], 2).is_err());
    }

    #[test]
    fn parses_hatexplain_layout() {
        let json = r#"{
          "p2": {"post_id": "p2", "post_tokens": ["you", "suck"],
                 "annotators": [{"label": "offensive", "annotator_id": 1, "target": ["None"]},
                                {"label": "offensive", "annotator_id": 2, "target": ["Women"]}],
                 "rationales": [[0, 1], [0, 1]]},
          "p1": {"post_tokens": ["hi"], "annotators": [{"label": "normal", "target": []}], "rationales": []}
        }"#;
        let posts = parse_posts(json).unwrap();
        assert_eq!(posts[0].post_id, "p1");
        let (class, rat) = posts[1].aggregate().unwrap().unwrap();
        assert_eq!(class, Offensive);
        assert_eq!(rat, vec![0, 1]);
        assert_eq!(posts[1].target_groups(), vec!["None".to_string(), "Women".to_string()]);
    }

    #[test]
    fn malformed_post_names_its_id() {
        let json = r#"{"bad7": {"post_tokens": ["a"], "annotators": [{"label": "normal"}], "rationales": [[1, 0]]}}"#;
        let err = parse_posts(json).unwrap_err().to_string();
        assert!(err.contains("bad7"), "{err}");
        let json = r#"{"bad8": {"post_tokens": 3}}"#;
        assert!(parse_posts(json).unwrap_err().to_string().contains("bad8"));
    }

    #[test]
    fn normal_majority_ignores_rationales() {
        let post = RawPost {
            post_id: "x".into(),
            post_tokens: vec!["a".into(), "b".into()],
            annotators: vec![
                Annotator { label: "normal".into(), targets: vec![] },
                Annotator { label: "normal".into(), targets: vec![] },
                Annotator { label: "offensive".into(), targets: vec![] },
            ],
            rationales: vec![vec![1, 1]],
        };
        assert_eq!(post.aggregate().unwrap().unwrap(), (Normal, vec![0, 0]));
    }
}
