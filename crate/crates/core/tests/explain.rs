use mrp_core::corpus::{pack_ids, Class, Example};
use mrp_core::encoder::{EncoderModel, ModelConfig};
use mrp_core::explain::{attention_scores, cls_attention, lime_scores, Classifier, HeadReduction, LimeOptions, Method};
use mrp_core::numcore::{Matrix, ParameterSet, Rng};
use mrp_core::Result;

/// Hateful with certainty iff the planted id is present.
struct Planted(u32);

impl Classifier for Planted {
    fn class_probs(&self, ids: &[u32]) -> Result<Vec<f64>> {
        Ok(if ids.contains(&self.0) { vec![0.0, 0.0, 1.0] } else { vec![1.0, 0.0, 0.0] })
    }
}

struct Constant;

impl Classifier for Constant {
    fn class_probs(&self, _: &[u32]) -> Result<Vec<f64>> {
        Ok(vec![0.2, 0.5, 0.3])
    }
}

fn example(words: &[u32]) -> Example {
    let (ids, real) = pack_ids(words, words.len() + 2);
    let mut gold = vec![0; ids.len()];
    gold[1] = 1;
    Example {
        id: "x".into(),
        tokens: words.iter().map(|w| format!("t{w}")).collect(),
        token_ids: ids,
        attention_len: real,
        class: Class::Hatespeech,
        gold_rationale: gold,
        target_groups: Default::default(),
    }
}

#[test]
fn lime_recovers_the_planted_token() {
    let words = [10, 11, 12, 13, 99, 14, 15, 16, 17, 18];
    let e = example(&words);
    let s = lime_scores(&Planted(99), &e, &LimeOptions::default(), &mut Rng::new(0)).unwrap();
    assert_eq!(s.method, Method::Lime);
    assert_eq!(s.predicted_class, Class::Hatespeech);
    assert_eq!(s.scores[4], 1.0);
    for (i, &v) in s.scores.iter().enumerate() {
        if i != 4 {
            assert!(v < 0.1, "token {i} scored {v}");
        }
    }
    assert!(s.raw_coefficients.unwrap()[4] > 0.5);
}

#[test]
fn lime_argmax_is_the_planted_token_across_seeds_and_sample_sizes() {
    let words = [10, 11, 12, 13, 14, 15, 99, 16, 17, 18, 19, 20];
    let e = example(&words);
    for n_samples in [50, 80, 200] {
        for seed in 0..10 {
            let opts = LimeOptions { n_samples, ..Default::default() };
            let s = lime_scores(&Planted(99), &e, &opts, &mut Rng::new(seed)).unwrap();
            let best = (0..s.scores.len()).max_by(|&a, &b| s.scores[a].total_cmp(&s.scores[b])).unwrap();
            assert_eq!(best, 6, "n={n_samples} seed={seed} {:?}", s.scores);
        }
    }
}

#[test]
fn lime_on_a_constant_model_gives_zero_coefficients() {
    let e = example(&[5, 6, 7, 8]);
    let s = lime_scores(&Constant, &e, &LimeOptions::default(), &mut Rng::new(1)).unwrap();
    assert!(s.raw_coefficients.unwrap().iter().all(|&c| c.abs() < 1e-12));
    assert!(s.scores.iter().all(|&v| v == 0.0));
    assert_eq!(s.predicted_class, Class::Offensive);
}

#[test]
fn lime_is_seeded_and_checks_sample_count() {
    let e = example(&[5, 99, 7, 8, 9]);
    let a = lime_scores(&Planted(99), &e, &LimeOptions::default(), &mut Rng::new(3)).unwrap();
    let b = lime_scores(&Planted(99), &e, &LimeOptions::default(), &mut Rng::new(3)).unwrap();
    assert_eq!(a, b);
    let few = LimeOptions { n_samples: 9, ..Default::default() };
    assert!(lime_scores(&Planted(99), &e, &few, &mut Rng::new(3)).is_err());
}

fn model() -> EncoderModel<f64> {
    let cfg = ModelConfig {
        d_model: 8,
        n_layers: 2,
        n_heads: 2,
        ff_dim: 12,
        max_len: 10,
        vocab_size: 30,
        ..ModelConfig::default()
    };
    let mut m = EncoderModel::new(cfg, &mut Rng::new(2)).unwrap();
    let mut rng = Rng::new(20);
    m.visit_mut(&mut |_, p| {
        for v in p.value.data_mut() {
            *v += 0.3 * rng.normal();
        }
    });
    m
}

#[test]
fn attention_scores_cover_the_words_and_normalise() {
    let m = model();
    let e = example(&[9, 12, 20, 7]);
    let before = m.clone();
    let s = attention_scores(&m, &e, HeadReduction::Mean).unwrap();
    assert_eq!(m, before);
    assert_eq!(s.scores.len(), 4);
    assert_eq!(s.scores.iter().copied().fold(0.0, f64::max), 1.0);
    assert!(s.scores.iter().all(|&v| (0.0..=1.0).contains(&v)));
    let raw = cls_attention(&m, &e, HeadReduction::Mean).unwrap();
    assert!(raw.iter().sum::<f64>() <= 1.0 + 1e-12);
    let max = cls_attention(&m, &e, HeadReduction::Max).unwrap();
    assert!(raw.iter().zip(&max).all(|(a, b)| a <= b));

    let single = attention_scores(&m, &example(&[9]), HeadReduction::Mean).unwrap();
    assert_eq!(single.scores, vec![1.0]);
}

#[test]
fn head_mean_matches_hand_recomputation() {
    let m = model();
    let e = example(&[9, 12, 20, 7, 3]);
    let trace = m
        .run(&mrp_core::encoder::EncoderInput::new(e.real_ids(), e.attention_len), None)
        .unwrap();
    // Rebuild the last block's CLS attention from its input.
    let x = &trace.hidden[trace.hidden.len() - 2];
    let b = m.blocks.last().unwrap();
    let n = x.rows();
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let r = x.row(i);
            let mean = r.iter().sum::<f64>() / r.len() as f64;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / r.len() as f64;
            let (g, bb) = (b.norm1_gain.value.data(), b.norm1_bias.value.data());
            (0..r.len()).map(|c| (r[c] - mean) / (var + 1e-5).sqrt() * g[c] + bb[c]).collect()
        })
        .collect();
    let xn = Matrix::from_rows(&rows).unwrap();
    let mut q = xn.matmul(&b.query.value).unwrap();
    q.add_row_broadcast(b.query_bias.value.data()).unwrap();
    let mut k = xn.matmul(&b.key.value).unwrap();
    k.add_row_broadcast(b.key_bias.value.data()).unwrap();
    let dh = 4;
    let mut want = vec![0.0; n];
    for h in 0..2 {
        let s: Vec<f64> = (0..n)
            .map(|j| (0..dh).map(|c| q.get(0, h * dh + c) * k.get(j, h * dh + c)).sum::<f64>() / 2.0)
            .collect();
        let mx = s.iter().copied().fold(f64::MIN, f64::max);
        let z: f64 = s.iter().map(|v| (v - mx).exp()).sum();
        for j in 0..n {
            want[j] += (s[j] - mx).exp() / z / 2.0;
        }
    }
    let got = cls_attention(&m, &e, HeadReduction::Mean).unwrap();
    for (g, w) in got.iter().zip(&want[1..n - 1]) {
        assert!((g - w).abs() < 1e-12, "{g} vs {w}");
    }
}

#[test]
fn encoder_lime_runs_end_to_end() {
    let m = model();
    let e = example(&[9, 12, 20, 7]);
    let s = lime_scores(&m, &e, &LimeOptions { n_samples: 40, ..Default::default() }, &mut Rng::new(0)).unwrap();
    assert_eq!(s.scores.len(), 4);
    let p = m.class_probs(e.real_ids()).unwrap();
    assert_eq!(s.class_probs, p);
}
