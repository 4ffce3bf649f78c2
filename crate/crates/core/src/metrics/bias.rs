use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{auc, PredictionRecord};
use crate::error::{Error, Result};

/// GMB exponent.
pub const GMB_POWER: f64 = -5.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BiasAucs {
    pub subgroup: Option<f64>,
    pub bpsn: Option<f64>,
    pub bnsp: Option<f64>,
}

/// Which records enter each bias AUC for group membership `in_group` and
/// toxicity `toxic`.
pub fn in_subgroup_set(in_group: bool, _toxic: bool) -> bool {
    in_group
}

/// Background positives and subgroup negatives.
pub fn in_bpsn_set(in_group: bool, toxic: bool) -> bool {
    toxic != in_group
}

/// Background negatives and subgroup positives.
pub fn in_bnsp_set(in_group: bool, toxic: bool) -> bool {
    toxic == in_group
}

fn auc_over(records: &[PredictionRecord], group: &str, keep: fn(bool, bool) -> bool) -> Option<f64> {
    let (mut scores, mut labels) = (Vec::new(), Vec::new());
    for r in records {
        let toxic = r.gold_class.is_toxic();
        if keep(r.target_groups.contains(group), toxic) {
            scores.push(r.toxic_score);
            labels.push(toxic);
        }
    }
    auc(&scores, &labels)
}

/// Subgroup, BPSN and BNSP AUCs over the toxic score. A record belongs to
/// the group if any annotator named it.
pub fn bias_aucs(records: &[PredictionRecord], group: &str) -> BiasAucs {
    BiasAucs {
        subgroup: auc_over(records, group, in_subgroup_set),
        bpsn: auc_over(records, group, in_bpsn_set),
        bnsp: auc_over(records, group, in_bnsp_set),
    }
}

/// Power mean `(1/N Σ vᵖ)^(1/p)`; `p = 0` is the geometric mean.
pub fn gmb(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::input("power mean of no values"));
    }
    if values.iter().any(|v| !v.is_finite() || *v < 0.0 || (*v == 0.0 && p <= 0.0)) {
        return Err(Error::input(format!("power mean with p = {p} needs positive values, got {values:?}")));
    }
    let n = values.len() as f64;
    if p == 0.0 {
        return Ok((values.iter().map(|v| v.ln()).sum::<f64>() / n).exp());
    }
    Ok((values.iter().map(|v| v.powf(p)).sum::<f64>() / n).powf(1.0 / p))
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub groups: BTreeMap<String, BiasAucs>,
    pub gmb_subgroup: Option<f64>,
    pub gmb_bpsn: Option<f64>,
    pub gmb_bnsp: Option<f64>,
}

/// Per-group AUCs and their power means over the groups where each AUC is
/// defined. A zero AUC under a negative exponent gives the limit value 0.
pub fn bias_report<S: AsRef<str>>(records: &[PredictionRecord], groups: &[S], p: f64) -> BiasReport {
    let groups: BTreeMap<String, BiasAucs> = groups
        .iter()
        .map(|g| (g.as_ref().to_string(), bias_aucs(records, g.as_ref())))
        .collect();
    let mean = |pick: fn(&BiasAucs) -> Option<f64>| {
        let values: Vec<f64> = groups.values().filter_map(pick).collect();
        if p < 0.0 && values.contains(&0.0) {
            return Some(0.0);
        }
        gmb(&values, p).ok()
    };
    BiasReport {
        gmb_subgroup: mean(|b| b.subgroup),
        gmb_bpsn: mean(|b| b.bpsn),
        gmb_bnsp: mean(|b| b.bnsp),
        groups,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_mean_examples() {
        // ((0.8⁻⁵ + 0.9⁻⁵) / 2)^(−1/5)
        assert!((gmb(&[0.8, 0.9], -5.0).unwrap() - 0.841_305_786_169_635).abs() < 1e-12);
        assert!((gmb(&[0.7, 0.7, 0.7], -5.0).unwrap() - 0.7).abs() < 1e-12);
        assert!((gmb(&[0.2, 0.4, 0.9], 1.0).unwrap() - 0.5).abs() < 1e-12);
        assert!(gmb(&[0.0, 0.5], -5.0).is_err());
        assert!(gmb(&[], -5.0).is_err());
    }
}
