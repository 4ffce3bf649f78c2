use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Defaults: a token is predicted when its score is above 0.5; a predicted
/// span matches a gold span at IOU ≥ 0.5.
pub const SCORE_THRESHOLD: f64 = 0.5;
pub const IOU_MATCH: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plausibility {
    pub iou_f1: f64,
    pub token_f1: f64,
    pub auprc: f64,
    /// Instances with a non-empty gold rationale.
    pub instances: usize,
}

/// Maximal runs of ones as half-open `[start, end)` ranges.
pub fn spans(bits: &[u8]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &b) in bits.iter().enumerate() {
        match (b != 0, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push((s, bits.len()));
    }
    out
}

pub fn span_iou(a: (usize, usize), b: (usize, usize)) -> f64 {
    let inter = a.1.min(b.1).saturating_sub(a.0.max(b.0));
    let union = (a.1 - a.0) + (b.1 - b.0) - inter;
    inter as f64 / union as f64
}

pub fn threshold(scores: &[f64], t: f64) -> Vec<u8> {
    scores.iter().map(|&s| u8::from(s > t)).collect()
}

/// Per-instance `(precision, recall)` of span matching: a gold span counts
/// as found when some predicted span overlaps it with IOU ≥ `iou_match`.
pub fn span_match(pred: &[u8], gold: &[u8], iou_match: f64) -> (f64, f64) {
    let (ps, gs) = (spans(pred), spans(gold));
    let found = gs
        .iter()
        .filter(|&&g| ps.iter().any(|&p| span_iou(p, g) >= iou_match))
        .count() as f64;
    let precision = if ps.is_empty() { 0.0 } else { found / ps.len() as f64 };
    let recall = if gs.is_empty() { 0.0 } else { found / gs.len() as f64 };
    (precision, recall)
}

pub fn token_f1(pred: &[u8], gold: &[u8]) -> f64 {
    let tp = pred.iter().zip(gold).filter(|(p, g)| **p != 0 && **g != 0).count() as f64;
    let np = pred.iter().filter(|&&p| p != 0).count() as f64;
    let ng = gold.iter().filter(|&&g| g != 0).count() as f64;
    if tp == 0.0 {
        return 0.0;
    }
    let (p, r) = (tp / np, tp / ng);
    2.0 * p * r / (p + r)
}

/// Average precision: `Σ (Rₙ − Rₙ₋₁) Pₙ` over thresholds at each distinct
/// score, highest first.
pub fn average_precision(scores: &[f64], gold: &[u8]) -> f64 {
    let positives = gold.iter().filter(|&&g| g != 0).count();
    if positives == 0 {
        return 0.0;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let (mut tp, mut seen, mut prev_recall, mut ap) = (0usize, 0usize, 0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]].total_cmp(&s).is_eq() {
            tp += usize::from(gold[order[i]] != 0);
            seen += 1;
            i += 1;
        }
        let recall = tp as f64 / positives as f64;
        ap += (recall - prev_recall) * (tp as f64 / seen as f64);
        prev_recall = recall;
    }
    ap
}

/// Agreement between token scores and gold rationales, averaged per
/// instance. Instances whose gold rationale is empty are skipped.
pub fn plausibility(items: &[(&[f64], &[u8])], threshold_at: f64, iou_match: f64) -> Result<Option<Plausibility>> {
    let (mut p_sum, mut r_sum, mut f1_sum, mut ap_sum, mut n) = (0.0, 0.0, 0.0, 0.0, 0usize);
    for (scores, gold) in items {
        if scores.len() != gold.len() {
            return Err(Error::shape(format!("{} scores for {} gold bits", scores.len(), gold.len())));
        }
        if gold.iter().all(|&g| g == 0) {
            continue;
        }
        let pred = threshold(scores, threshold_at);
        let (p, r) = span_match(&pred, gold, iou_match);
        p_sum += p;
        r_sum += r;
        f1_sum += token_f1(&pred, gold);
        ap_sum += average_precision(scores, gold);
        n += 1;
    }
    if n == 0 {
        return Ok(None);
    }
    let nf = n as f64;
    let (p, r) = (p_sum / nf, r_sum / nf);
    Ok(Some(Plausibility {
        iou_f1: if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 },
        token_f1: f1_sum / nf,
        auprc: ap_sum / nf,
        instances: n,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spans_and_iou() {
        assert_eq!(spans(&[0, 1, 1, 0, 1]), vec![(1, 3), (4, 5)]);
        assert_eq!(spans(&[1, 1]), vec![(0, 2)]);
        assert!(spans(&[0, 0]).is_empty());
        // gold {2,3} vs predicted {3,4}
        assert!((span_iou((2, 4), (3, 5)) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(span_match(&[0, 0, 0, 1, 1], &[0, 0, 1, 1, 0], 0.5), (0.0, 0.0));
    }

    #[test]
    fn gold_as_prediction_is_perfect() {
        let gold: Vec<u8> = vec![0, 1, 1, 0, 1];
        let scores: Vec<f64> = gold.iter().map(|&g| f64::from(g)).collect();
        let p = plausibility(&[(&scores, &gold)], SCORE_THRESHOLD, IOU_MATCH).unwrap().unwrap();
        assert_eq!((p.iou_f1, p.token_f1, p.auprc), (1.0, 1.0, 1.0));
    }

    #[test]
    fn empty_gold_is_skipped() {
        let scores = [0.3, 0.9];
        assert_eq!(plausibility(&[(&scores, &[0, 0])], 0.5, 0.5).unwrap(), None);
    }
}
