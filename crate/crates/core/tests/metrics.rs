use std::collections::{BTreeMap, BTreeSet};

use mrp_core::corpus::{pack_ids, Class, Example};
use mrp_core::explain::{Classifier, Method};
use mrp_core::metrics::*;
use mrp_core::Result;
use proptest::prelude::*;

fn pair_auc(scores: &[f64], labels: &[bool]) -> Option<f64> {
    let (mut twice, mut pairs) = (0u128, 0u128);
    for (i, &li) in labels.iter().enumerate() {
        for (j, &lj) in labels.iter().enumerate() {
            if li && !lj {
                pairs += 1;
                twice += if scores[i] > scores[j] {
                    2
                } else if scores[i] == scores[j] {
                    1
                } else {
                    0
                };
            }
        }
    }
    (pairs > 0).then(|| twice as f64 / (2 * pairs) as f64)
}

/// Maximal runs found by checking every interval.
fn brute_spans(bits: &[u8]) -> Vec<BTreeSet<usize>> {
    let n = bits.len();
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..=n {
            let all = bits[i..j].iter().all(|&b| b == 1);
            let left = i == 0 || bits[i - 1] == 0;
            let right = j == n || bits[j] == 0;
            if all && left && right {
                out.push((i..j).collect());
            }
        }
    }
    out
}

fn set_iou(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    a.intersection(b).count() as f64 / a.union(b).count() as f64
}

fn brute_ap(scores: &[f64], gold: &[u8]) -> f64 {
    let mut ts: Vec<f64> = scores.to_vec();
    ts.sort_by(|a, b| b.total_cmp(a));
    ts.dedup();
    let pos = gold.iter().filter(|&&g| g == 1).count() as f64;
    let (mut ap, mut prev) = (0.0, 0.0);
    for t in ts {
        let sel: Vec<usize> = (0..scores.len()).filter(|&i| scores[i] >= t).collect();
        let tp = sel.iter().filter(|&&i| gold[i] == 1).count() as f64;
        let r = tp / pos;
        ap += (r - prev) * tp / sel.len() as f64;
        prev = r;
    }
    ap
}

fn record(id: usize, gold: Class, probs: [f64; 3], groups: &[&str]) -> PredictionRecord {
    PredictionRecord {
        id: format!("r{id:02}"),
        gold_class: gold,
        predicted_class: Class::from_index(mrp_core::explain::argmax(&probs)).unwrap(),
        class_probs: probs,
        toxic_score: probs[1] + probs[2],
        target_groups: groups.iter().map(|s| s.to_string()).collect(),
        gold_rationale: vec![],
        token_scores: BTreeMap::new(),
    }
}

proptest! {
    #[test]
    fn auc_equals_pair_counting(data in prop::collection::vec((0u8..6, any::<bool>()), 1..40)) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 5.0).collect();
        let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
        prop_assert_eq!(auc(&scores, &labels), pair_auc(&scores, &labels));
    }

    #[test]
    fn auc_is_order_free_and_bounded(data in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..30), seed in any::<u64>()) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| *s).collect();
        let labels: Vec<bool> = data.iter().map(|(_, l)| *l).collect();
        let mut idx: Vec<usize> = (0..data.len()).collect();
        mrp_core::numcore::Rng::new(seed).shuffle(&mut idx);
        let s2: Vec<f64> = idx.iter().map(|&i| scores[i]).collect();
        let l2: Vec<bool> = idx.iter().map(|&i| labels[i]).collect();
        prop_assert_eq!(auc(&scores, &labels), auc(&s2, &l2));
        if let Some(a) = auc(&scores, &labels) {
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }

    #[test]
    fn gmb_is_a_bounded_monotone_mean(values in prop::collection::vec(0.05f64..1.0, 1..12), bump in 0.0f64..0.5, at in any::<prop::sample::Index>()) {
        let g = gmb(&values, -5.0).unwrap();
        let direct = (values.iter().map(|v| v.powf(-5.0)).sum::<f64>() / values.len() as f64).powf(-0.2);
        prop_assert!((g - direct).abs() < 1e-9);
        let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = values.iter().copied().fold(0.0, f64::max);
        prop_assert!(g >= lo - 1e-12 && g <= hi + 1e-12);
        let mut raised = values.clone();
        raised[at.index(values.len())] += bump;
        prop_assert!(gmb(&raised, -5.0).unwrap() >= g - 1e-12);
    }

    #[test]
    fn span_matching_matches_set_enumeration(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..16)) {
        let pred: Vec<u8> = pairs.iter().map(|p| u8::from(p.0)).collect();
        let gold: Vec<u8> = pairs.iter().map(|p| u8::from(p.1)).collect();
        let (ps, gs) = (brute_spans(&pred), brute_spans(&gold));
        prop_assert_eq!(spans(&pred).len(), ps.len());
        let found = gs.iter().filter(|g| ps.iter().any(|p| set_iou(p, g) >= 0.5)).count() as f64;
        let want_p = if ps.is_empty() { 0.0 } else { found / ps.len() as f64 };
        let want_r = if gs.is_empty() { 0.0 } else { found / gs.len() as f64 };
        let (p, r) = span_match(&pred, &gold, 0.5);
        prop_assert!((p - want_p).abs() < 1e-9 && (r - want_r).abs() < 1e-9);
    }

    #[test]
    fn average_precision_matches_threshold_enumeration(data in prop::collection::vec((0u8..5, any::<bool>()), 1..12)) {
        let scores: Vec<f64> = data.iter().map(|(s, _)| f64::from(*s) / 4.0).collect();
        let gold: Vec<u8> = data.iter().map(|(_, g)| u8::from(*g)).collect();
        prop_assume!(gold.contains(&1));
        prop_assert!((average_precision(&scores, &gold) - brute_ap(&scores, &gold)).abs() < 1e-9);
    }
}

#[test]
fn hand_checked_auc_values() {
    assert_eq!(auc(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]), Some(0.75));
    assert_eq!(auc(&[0.2; 4], &[false, true, false, true]), Some(0.5));
}

#[test]
fn bias_sets_follow_membership() {
    use Class::*;
    let groups: [&[&str]; 10] = [&["Women"], &[], &["Women", "Arab"], &["Arab"], &["Women"], &[], &[], &["Women"], &["Arab"], &[]];
    let golds = [Hatespeech, Normal, Normal, Offensive, Normal, Hatespeech, Normal, Offensive, Normal, Offensive];
    let records: Vec<PredictionRecord> = (0..10)
        .map(|i| record(i, golds[i], [0.5, 0.25, 0.25], groups[i]))
        .collect();
    let members = |keep: fn(bool, bool) -> bool| -> Vec<usize> {
        (0..10)
            .filter(|&i| keep(records[i].target_groups.contains("Women"), records[i].gold_class.is_toxic()))
            .collect()
    };
    // Women: 0 (toxic), 2 (normal), 4 (normal), 7 (toxic)
    assert_eq!(members(in_subgroup_set), vec![0, 2, 4, 7]);
    assert_eq!(members(in_bpsn_set), vec![2, 3, 4, 5, 9]);
    assert_eq!(members(in_bnsp_set), vec![0, 1, 6, 7, 8]);
}

#[test]
fn subgroup_auc_is_one_when_group_toxic_outscore_group_normal() {
    let records = vec![
        record(0, Class::Hatespeech, [0.1, 0.1, 0.8], &["Jewish"]),
        record(1, Class::Normal, [0.7, 0.2, 0.1], &["Jewish"]),
        record(2, Class::Offensive, [0.3, 0.6, 0.1], &["Jewish"]),
        record(3, Class::Normal, [0.9, 0.05, 0.05], &[]),
    ];
    let b = bias_aucs(&records, "Jewish");
    assert_eq!(b.subgroup, Some(1.0));
    assert_eq!(bias_aucs(&records, "Asian").subgroup, None);
}

/// Toxic iff a lexicon word is present; group-term posts get a planted boost.
#[test]
fn planted_group_bias_lowers_bpsn() {
    let mut biased = Vec::new();
    for i in 0..200 {
        let toxic = i % 2 == 0;
        let in_group = (i / 2) % 2 == 0;
        let mut s = if toxic { 0.7 } else { 0.3 } + 0.001 * (i % 7) as f64;
        if in_group {
            s += 0.5;
        }
        let s = s.min(0.99);
        let gold = if toxic { Class::Hatespeech } else { Class::Normal };
        biased.push(record(i, gold, [1.0 - s, 0.0, s], if in_group { &["Islam"] } else { &[] }));
    }
    let b = bias_aucs(&biased, "Islam");
    assert!(b.bpsn.unwrap() < b.subgroup.unwrap() - 0.05, "{b:?}");
}

#[test]
fn performance_auroc_is_the_mean_pairwise_auc() {
    let probs = [[0.6, 0.3, 0.1], [0.2, 0.5, 0.3], [0.1, 0.2, 0.7], [0.4, 0.4, 0.2], [0.3, 0.3, 0.4], [0.5, 0.1, 0.4]];
    let golds = [Class::Normal, Class::Offensive, Class::Hatespeech, Class::Offensive, Class::Normal, Class::Hatespeech];
    let records: Vec<PredictionRecord> = (0..6).map(|i| record(i, golds[i], probs[i], &[])).collect();
    let p = performance(&records).unwrap();
    let mut want = 0.0;
    for c in 0..3 {
        let s: Vec<f64> = probs.iter().map(|p| p[c]).collect();
        let l: Vec<bool> = golds.iter().map(|g| g.index() == c).collect();
        want += pair_auc(&s, &l).unwrap() / 3.0;
    }
    assert!((p.auroc.unwrap() - want).abs() < 1e-12);
    let all_right: Vec<PredictionRecord> = (0..3)
        .map(|i| {
            let mut pr = [0.1, 0.1, 0.1];
            pr[i] = 0.8;
            record(i, Class::from_index(i).unwrap(), pr, &[])
        })
        .collect();
    let p = performance(&all_right).unwrap();
    assert_eq!((p.accuracy, p.macro_f1), (1.0, 1.0));
}

struct Planted(u32);

impl Classifier for Planted {
    fn class_probs(&self, ids: &[u32]) -> Result<Vec<f64>> {
        Ok(if ids.contains(&self.0) { vec![0.0, 0.0, 1.0] } else { vec![1.0, 0.0, 0.0] })
    }
}

fn example(id: &str, words: &[u32], gold_words: &[usize]) -> Example {
    let (ids, real) = pack_ids(words, words.len() + 2);
    let mut gold = vec![0; ids.len()];
    for &w in gold_words {
        gold[w + 1] = 1;
    }
    Example {
        id: id.into(),
        tokens: words.iter().map(|w| format!("t{w}")).collect(),
        token_ids: ids,
        attention_len: real,
        class: Class::Hatespeech,
        gold_rationale: gold,
        target_groups: Default::default(),
    }
}

#[test]
fn faithfulness_on_the_planted_model() {
    let e = example("a", &[10, 11, 99, 12, 13, 14, 15, 16], &[2]);
    let scores = [0.0, 0.1, 1.0, 0.2, 0.0, 0.3, 0.4, 0.0];
    let f = faithfulness(&Planted(99), &[(&e, &scores[..])], 5).unwrap().unwrap();
    assert!(f.comprehensiveness >= 0.8);
    assert!(f.sufficiency <= 0.05);
    // Removing and keeping close the sequence up.
    assert_eq!(select_words(&e, &[2, 5], false), vec![0, 10, 11, 12, 13, 15, 16, 1]);
    assert_eq!(select_words(&e, &[2, 5], true), vec![0, 99, 14, 1]);

    let short = example("b", &[99, 20, 21], &[0]);
    let full = faithfulness(&Planted(99), &[(&short, &[0.2, 0.5, 0.1][..])], 5).unwrap().unwrap();
    assert_eq!(full.sufficiency, 0.0);
    assert!(faithfulness(&Planted(99), &[(&short, &[0.2, 0.5, 0.1][..])], 0).is_err());
}

#[test]
fn report_has_one_row_per_metric() {
    let mut examples = Vec::new();
    let mut records = Vec::new();
    for i in 0..12 {
        let toxic = i % 3 != 0;
        let mut e = example(&format!("p{i:02}"), &[10, 11, if toxic { 99 } else { 12 }, 13], if toxic { &[2] } else { &[] });
        e.class = if toxic { Class::Hatespeech } else { Class::Normal };
        e.target_groups = [mrp_core::corpus::TARGET_GROUPS[i % 10].to_string()].into();
        let probs = if toxic { [0.1, 0.2, 0.7] } else { [0.8, 0.1, 0.1] };
        let mut r = PredictionRecord::new(&e, probs).unwrap();
        r.token_scores.insert(Method::Attention, vec![0.1, 0.2, 1.0, 0.0]);
        r.token_scores.insert(Method::Lime, vec![0.0, 0.0, 1.0, 0.0]);
        examples.push(e);
        records.push(r);
    }
    let report = evaluate("toy", &Planted(99), &examples, &records, &EvalOptions::default()).unwrap();
    let rows = report.rows();
    assert_eq!(rows.len(), 46);
    let lime = report.explainability[&Method::Lime];
    assert_eq!(lime.iou_f1, Some(1.0));
    assert_eq!(lime.comprehensiveness, Some(1.0));
    assert_eq!(lime.instances, 8);
    assert_eq!(report.performance.accuracy, 1.0);
    let json = serde_json::to_string(&report).unwrap();
    let back: EvalReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);

    let mut shuffled_r = records.clone();
    let mut shuffled_e = examples.clone();
    shuffled_r.reverse();
    shuffled_e.reverse();
    let again = evaluate("toy", &Planted(99), &shuffled_e, &shuffled_r, &EvalOptions::default()).unwrap();
    assert_eq!(again.rows(), rows);
}
