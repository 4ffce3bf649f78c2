use serde::{Deserialize, Serialize};

use super::{auc, PredictionRecord};
use crate::corpus::Class;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Performance {
    pub accuracy: f64,
    pub macro_f1: f64,
    /// Mean one-vs-rest AUC over classes where it is defined.
    pub auroc: Option<f64>,
    /// Classes with neither gold nor predicted instances; their F1 term is 0.
    pub absent_classes: Vec<Class>,
}

/// Macro F1 over the three classes. A class that never occurs in gold or
/// predictions contributes 0 and is listed.
pub fn macro_f1(gold: &[Class], pred: &[Class]) -> (f64, Vec<Class>) {
    let mut sum = 0.0;
    let mut absent = Vec::new();
    for c in Class::ALL {
        let tp = gold.iter().zip(pred).filter(|(g, p)| **g == c && **p == c).count() as f64;
        let n_gold = gold.iter().filter(|&&g| g == c).count() as f64;
        let n_pred = pred.iter().filter(|&&p| p == c).count() as f64;
        if n_gold + n_pred == 0.0 {
            absent.push(c);
            continue;
        }
        sum += 2.0 * tp / (n_gold + n_pred);
    }
    (sum / Class::ALL.len() as f64, absent)
}

pub fn performance(records: &[PredictionRecord]) -> Result<Performance> {
    if records.is_empty() {
        return Err(Error::input("performance of no records"));
    }
    let gold: Vec<Class> = records.iter().map(|r| r.gold_class).collect();
    let pred: Vec<Class> = records.iter().map(|r| r.predicted_class).collect();
    let correct = gold.iter().zip(&pred).filter(|(g, p)| g == p).count();
    let (macro_f1, absent_classes) = macro_f1(&gold, &pred);
    let per_class: Vec<f64> = Class::ALL
        .iter()
        .filter_map(|&c| {
            let scores: Vec<f64> = records.iter().map(|r| r.class_probs[c.index()]).collect();
            let labels: Vec<bool> = gold.iter().map(|&g| g == c).collect();
            auc(&scores, &labels)
        })
        .collect();
    Ok(Performance {
        accuracy: correct as f64 / records.len() as f64,
        macro_f1,
        auroc: (!per_class.is_empty()).then(|| per_class.iter().sum::<f64>() / per_class.len() as f64),
        absent_classes,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use Class::*;

    #[test]
    fn hand_worked_confusion() {
        // gold\pred   N  O  H
        //   N         3  1  0
        //   O         1  2  1
        //   H         0  1  1
        let mut gold = Vec::new();
        let mut pred = Vec::new();
        let cells = [
            (Normal, Normal, 3),
            (Normal, Offensive, 1),
            (Offensive, Normal, 1),
            (Offensive, Offensive, 2),
            (Offensive, Hatespeech, 1),
            (Hatespeech, Offensive, 1),
            (Hatespeech, Hatespeech, 1),
        ];
        for (g, p, n) in cells {
            for _ in 0..n {
                gold.push(g);
                pred.push(p);
            }
        }
        // F1: N 6/8, O 4/8, H 2/4
        let (f1, absent) = macro_f1(&gold, &pred);
        assert!((f1 - (0.75 + 0.5 + 0.5) / 3.0).abs() < 1e-15);
        assert!(absent.is_empty());
    }

    #[test]
    fn absent_class_counts_zero() {
        let (f1, absent) = macro_f1(&[Normal, Hatespeech], &[Normal, Hatespeech]);
        assert!((f1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(absent, vec![Offensive]);
    }
}
